//! Line-oriented training log: `epoch=<n> train_loss=<x> val_loss=<x> lr=<x>`.

use std::fmt::Write as _;

use vipera_core::trainer::EpochLog;

pub fn format_log(log: &[EpochLog]) -> String {
    let mut out = String::new();
    for l in log {
        writeln!(
            out,
            "epoch={} train_loss={} val_loss={} lr={}",
            l.epoch, l.train_loss, l.val_loss, l.lr
        )
        .expect("writing to a String");
    }
    out
}

/// Parses lines written by [`format_log`]; `None` on any malformed line.
pub fn parse_log(text: &str) -> Option<Vec<EpochLog>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut fields = line.split_whitespace().map(|kv| kv.split_once('='));
            let mut next = |key: &str| match fields.next()? {
                Some((k, v)) if k == key => Some(v),
                _ => None,
            };
            Some(EpochLog {
                epoch: next("epoch")?.parse().ok()?,
                train_loss: next("train_loss")?.parse().ok()?,
                val_loss: next("val_loss")?.parse().ok()?,
                lr: next("lr")?.parse().ok()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_lines_round_trip() {
        let log = vec![
            EpochLog {
                epoch: 1,
                train_loss: 0.693,
                val_loss: 0.61,
                lr: 1e-4,
            },
            EpochLog {
                epoch: 2,
                train_loss: 0.5,
                val_loss: 0.6,
                lr: 1e-5,
            },
        ];
        let text = format_log(&log);
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("epoch=1 train_loss=0.693 val_loss=0.61 lr=0.0001\n"));
        assert_eq!(parse_log(&text).unwrap(), log);
        assert!(parse_log("epoch=x").is_none());
    }
}
