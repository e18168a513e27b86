//! `.vemb` embedding interchange files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VEMB"
//! 4       2     version (u16) = 1
//! 6       1     mode: b'A' per-frame features, b'B' per-window projected
//! 7       4     rows  (u32)  mode A: M_f, mode B: T_v
//! 11      4     cols  (u32)  mode A: D_f, mode B: E
//! 15      4     record count (u32)
//! 19      4     frames per record (u32); 1 in mode A, J in mode B
//! 23      ...   records: start frame (u32), rows·cols f32, row-major
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use vipera_core::Matrix;

use super::bytes::{check_magic, put_f32s, Reader};
use crate::error::{Result, StoreError};

pub const VEMB_MAGIC: &[u8; 4] = b"VEMB";
pub const VEMB_VERSION: u16 = 1;
pub const VEMB_HEADER_LEN: usize = 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingMode {
    /// One record per frame holding its `M_f × D_f` encoder tokens.
    FrameFeatures,
    /// One record per window holding its `T_v × E` projected embedding.
    Windows,
}

impl EmbeddingMode {
    pub fn byte(self) -> u8 {
        match self {
            EmbeddingMode::FrameFeatures => b'A',
            EmbeddingMode::Windows => b'B',
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            b'A' => Ok(EmbeddingMode::FrameFeatures),
            b'B' => Ok(EmbeddingMode::Windows),
            other => Err(StoreError::UnknownMode(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub start: u32,
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub mode: EmbeddingMode,
    pub rows: usize,
    pub cols: usize,
    pub frames_per_record: usize,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingFile {
    pub fn new(
        mode: EmbeddingMode,
        rows: usize,
        cols: usize,
        frames_per_record: usize,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self> {
        let f = EmbeddingFile {
            mode,
            rows,
            cols,
            frames_per_record,
            records,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.frames_per_record == 0 {
            return Err(StoreError::Header("dimensions must be >= 1".into()));
        }
        if self.mode == EmbeddingMode::FrameFeatures && self.frames_per_record != 1 {
            return Err(StoreError::Header(format!(
                "per-frame files hold one frame per record, header says {}",
                self.frames_per_record
            )));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.matrix.shape() != (self.rows, self.cols) {
                return Err(StoreError::Header(format!(
                    "record {i} is {}x{}, header declares {}x{}",
                    r.matrix.rows(),
                    r.matrix.cols(),
                    self.rows,
                    self.cols
                )));
            }
            if let Some(index) = r.matrix.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite { record: i, index });
            }
        }
        Ok(())
    }

    /// Exact encoded length for the given geometry.
    pub fn encoded_len(rows: usize, cols: usize, records: usize) -> usize {
        VEMB_HEADER_LEN + records * (4 + rows * cols * 4)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let dim = |v: usize| -> Result<[u8; 4]> {
            u32::try_from(v)
                .map(u32::to_le_bytes)
                .map_err(|_| StoreError::Header(format!("{v} does not fit in u32")))
        };
        let mut out = Vec::with_capacity(Self::encoded_len(self.rows, self.cols, self.records.len()));
        out.extend_from_slice(VEMB_MAGIC);
        out.extend_from_slice(&VEMB_VERSION.to_le_bytes());
        out.push(self.mode.byte());
        out.extend_from_slice(&dim(self.rows)?);
        out.extend_from_slice(&dim(self.cols)?);
        out.extend_from_slice(&dim(self.records.len())?);
        out.extend_from_slice(&dim(self.frames_per_record)?);
        for r in &self.records {
            out.extend_from_slice(&r.start.to_le_bytes());
            put_f32s(&mut out, r.matrix.as_slice());
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(buf);
        check_magic(rd.array()?, VEMB_MAGIC)?;
        let version = rd.u16()?;
        if version != VEMB_VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let mode = EmbeddingMode::from_byte(rd.u8()?)?;
        let rows = rd.u32()? as usize;
        let cols = rd.u32()? as usize;
        let count = rd.u32()? as usize;
        let frames_per_record = rd.u32()? as usize;
        let expected = Self::encoded_len(rows, cols, count);
        if buf.len() < expected {
            return Err(StoreError::Truncated {
                expected,
                actual: buf.len(),
            });
        }
        if buf.len() > expected {
            return Err(StoreError::SizeMismatch {
                expected,
                actual: buf.len(),
            });
        }
        let mut records = Vec::with_capacity(count);
        for i in 0..count {
            let start = rd.u32()?;
            let data = rd.f32s(rows * cols, i)?;
            records.push(EmbeddingRecord {
                start,
                matrix: Matrix::from_vec(rows, cols, data)?,
            });
        }
        debug_assert_eq!(rd.remaining(), 0);
        EmbeddingFile::new(mode, rows, cols, frames_per_record, records)
    }
}

pub fn write_vemb(path: impl AsRef<Path>, file: &EmbeddingFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, file.to_bytes()?).map_err(|e| StoreError::io(path, e))
}

pub fn read_vemb(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    EmbeddingFile::from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(mode: EmbeddingMode, j: usize) -> EmbeddingFile {
        let records = (0..3)
            .map(|i| EmbeddingRecord {
                start: i * 8,
                matrix: Matrix::from_fn(2, 3, |r, c| (i as f32) - r as f32 * 0.5 + c as f32),
            })
            .collect();
        EmbeddingFile::new(mode, 2, 3, j, records).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = sample(EmbeddingMode::Windows, 8).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"VEMB");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], b'B');
        assert_eq!(&bytes[7..11], &2u32.to_le_bytes());
        assert_eq!(&bytes[11..15], &3u32.to_le_bytes());
        assert_eq!(&bytes[15..19], &3u32.to_le_bytes());
        assert_eq!(&bytes[19..23], &8u32.to_le_bytes());
        assert_eq!(&bytes[23..27], &0u32.to_le_bytes());
        assert_eq!(&bytes[27..31], &0.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 23 + 3 * (4 + 6 * 4));
    }

    #[test]
    fn per_frame_body_length() {
        // 64 frames of 16×64 tokens
        assert_eq!(
            EmbeddingFile::encoded_len(16, 64, 64) - VEMB_HEADER_LEN,
            64 * (4 + 16 * 64 * 4)
        );
    }

    #[test]
    fn distinct_error_kinds() {
        let good = sample(EmbeddingMode::Windows, 8).to_bytes().unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(EmbeddingFile::from_bytes(&bad), Err(StoreError::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            EmbeddingFile::from_bytes(&bad),
            Err(StoreError::UnsupportedVersion(2))
        ));

        assert!(matches!(
            EmbeddingFile::from_bytes(&good[..good.len() - 1]),
            Err(StoreError::Truncated { .. })
        ));
        assert!(matches!(
            EmbeddingFile::from_bytes(&good[..10]),
            Err(StoreError::Truncated { .. })
        ));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(
            EmbeddingFile::from_bytes(&bad),
            Err(StoreError::SizeMismatch { .. })
        ));

        let mut bad = good.clone();
        let off = 23 + 4 + 4;
        bad[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            EmbeddingFile::from_bytes(&bad),
            Err(StoreError::NonFinite { record: 0, index: 1 })
        ));

        let mut bad = good;
        bad[6] = b'Z';
        assert!(matches!(EmbeddingFile::from_bytes(&bad), Err(StoreError::UnknownMode(b'Z'))));
    }

    #[test]
    fn per_frame_mode_requires_single_frame_records() {
        let err = EmbeddingFile::new(EmbeddingMode::FrameFeatures, 2, 3, 8, vec![]).unwrap_err();
        assert!(matches!(err, StoreError::Header(_)));
        assert!(sample(EmbeddingMode::FrameFeatures, 1).to_bytes().is_ok());
    }
}
