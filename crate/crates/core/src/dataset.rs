//! Dataset manifest records, source-level splitting and training-subset
//! selection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::sampler::Label;

/// Which generator produced a video; `Real` for camera footage.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Generator {
    Real,
    Seine,
    DynamiCrafter,
    Rave,
    TokenFlow,
    Text2VideoZero,
    Other(String),
}

impl Generator {
    pub fn tag(&self) -> &str {
        match self {
            Generator::Real => "real",
            Generator::Seine => "SEINE",
            Generator::DynamiCrafter => "DC",
            Generator::Rave => "RAVE",
            Generator::TokenFlow => "TF",
            Generator::Text2VideoZero => "T2VZ",
            Generator::Other(name) => name,
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "real" => Generator::Real,
            "SEINE" => Generator::Seine,
            "DC" => Generator::DynamiCrafter,
            "RAVE" => Generator::Rave,
            "TF" => Generator::TokenFlow,
            "T2VZ" => Generator::Text2VideoZero,
            "" => return Err(Error::Config("empty generator tag".into())),
            other => Generator::Other(other.to_string()),
        })
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl Serialize for Generator {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for Generator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// H.264 constant rate factor applied to a video, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Crf {
    Uncompressed,
    Crf23,
    Crf30,
    Crf50,
}

impl Crf {
    pub fn value(self) -> Option<u8> {
        match self {
            Crf::Uncompressed => None,
            Crf::Crf23 => Some(23),
            Crf::Crf30 => Some(30),
            Crf::Crf50 => Some(50),
        }
    }

    pub fn from_value(v: Option<u64>) -> Result<Self> {
        match v {
            None => Ok(Crf::Uncompressed),
            Some(23) => Ok(Crf::Crf23),
            Some(30) => Ok(Crf::Crf30),
            Some(50) => Ok(Crf::Crf50),
            Some(other) => Err(Error::Config(alloc::format!(
                "crf {other} is not one of none, 23, 30, 50"
            ))),
        }
    }
}

impl fmt::Display for Crf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            None => f.write_str("none"),
            Some(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Crf {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Crf::Uncompressed);
        }
        let v = s
            .parse::<u64>()
            .map_err(|_| Error::Config(alloc::format!("invalid crf '{s}'")))?;
        Crf::from_value(Some(v))
    }
}

/// JSON form: `null` (or `"none"`) for uncompressed, otherwise the integer.
impl Serialize for Crf {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self.value() {
            None => s.serialize_none(),
            Some(v) => s.serialize_u8(v),
        }
    }
}

impl<'de> Deserialize<'de> for Crf {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        struct CrfVisitor;

        impl<'de> de::Visitor<'de> for CrfVisitor {
            type Value = Crf;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("null, \"none\", 23, 30 or 50")
            }

            fn visit_unit<E: de::Error>(self) -> core::result::Result<Crf, E> {
                Ok(Crf::Uncompressed)
            }

            fn visit_none<E: de::Error>(self) -> core::result::Result<Crf, E> {
                Ok(Crf::Uncompressed)
            }

            fn visit_some<D: Deserializer<'de>>(self, d: D) -> core::result::Result<Crf, D::Error> {
                d.deserialize_any(self)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> core::result::Result<Crf, E> {
                Crf::from_value(Some(v)).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> core::result::Result<Crf, E> {
                let v = u64::try_from(v).map_err(E::custom)?;
                self.visit_u64(v)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> core::result::Result<Crf, E> {
                v.parse().map_err(E::custom)
            }
        }

        d.deserialize_any(CrfVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            _ => Err(Error::Config(alloc::format!("unknown split '{s}'"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub video_id: String,
    pub embedding_path: String,
    pub label: Label,
    pub generator: Generator,
    #[serde(default = "uncompressed")]
    pub crf: Crf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_video_id: Option<String>,
    #[serde(default)]
    pub split: Split,
    pub n_frames: usize,
}

fn uncompressed() -> Crf {
    Crf::Uncompressed
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = DatasetManifest { entries };
        m.validate()?;
        Ok(m)
    }

    /// Unique ids, generator tags consistent with labels, non-empty videos.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Dataset(alloc::format!(
                    "duplicate video_id '{}'",
                    e.video_id
                )));
            }
            match (e.label, &e.generator) {
                (Label::Fake, Generator::Real) => {
                    return Err(Error::Dataset(alloc::format!(
                        "fake video '{}' has no generator tag",
                        e.video_id
                    )))
                }
                (Label::Real, g) if *g != Generator::Real => {
                    return Err(Error::Dataset(alloc::format!(
                        "real video '{}' tagged with generator {g}",
                        e.video_id
                    )))
                }
                _ => {}
            }
            if e.n_frames == 0 {
                return Err(Error::Dataset(alloc::format!(
                    "video '{}' has zero frames",
                    e.video_id
                )));
            }
        }
        Ok(())
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn get(&self, video_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.video_id == video_id)
    }

    /// Split unit of an entry: the end of its `source_video_id` chain.
    fn root_of<'a>(&'a self, index: &BTreeMap<&'a str, usize>, entry: &'a ManifestEntry) -> &'a str {
        let mut id = entry.video_id.as_str();
        let mut src = entry.source_video_id.as_deref();
        let mut hops = 0;
        while let Some(s) = src {
            id = s;
            hops += 1;
            if hops > self.entries.len() {
                break;
            }
            src = index
                .get(s)
                .and_then(|&i| self.entries[i].source_video_id.as_deref());
        }
        id
    }
}

/// Sizes `(train, val, test)` for `n` split units: val and test are
/// `n/10` and `n/5` rounded half up, train takes the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let val = (n + 5) / 10;
    let test = (2 * n + 5) / 10;
    (n - val - test, val, test)
}

/// Assigns train/val/test at the level of source videos: every entry joins
/// the split of the root of its `source_video_id` chain, so derived fakes
/// and re-encodes never leak across splits.
pub fn split_manifest(manifest: &DatasetManifest, seed: u64) -> Result<DatasetManifest> {
    manifest.validate()?;
    let index: BTreeMap<&str, usize> = manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.video_id.as_str(), i))
        .collect();
    let roots: Vec<&str> = manifest
        .entries
        .iter()
        .map(|e| manifest.root_of(&index, e))
        .collect();
    let mut units: Vec<&str> = roots.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if units.len() < 10 {
        return Err(Error::Dataset(alloc::format!(
            "splitting needs at least 10 source videos, found {}",
            units.len()
        )));
    }
    units.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (_, n_val, n_test) = split_sizes(units.len());
    let assignment: BTreeMap<&str, Split> = units
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let s = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
            (u, s)
        })
        .collect();
    let mut out = manifest.clone();
    for (e, root) in out.entries.iter_mut().zip(&roots) {
        e.split = assignment[root];
    }
    Ok(out)
}

/// Number of real source videos to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubsetSize {
    Count(usize),
    All,
}

impl FromStr for SubsetSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(SubsetSize::All);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(SubsetSize::Count(n)),
            _ => Err(Error::Config(alloc::format!(
                "subset size '{s}' is not a positive integer or 'all'"
            ))),
        }
    }
}

impl fmt::Display for SubsetSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetSize::Count(n) => write!(f, "{n}"),
            SubsetSize::All => f.write_str("all"),
        }
    }
}

/// Entries for one training run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainingView {
    pub train: Vec<ManifestEntry>,
    pub val: Vec<ManifestEntry>,
}

/// Picks `M` uncompressed real training videos together with one fake per
/// requested generator derived from each of them. Sources are eligible only
/// when every generator has a match; `seed` decides which sources are kept
/// when fewer than all are requested.
///
/// The validation view holds every uncompressed validation entry that is
/// real or comes from a requested generator.
pub fn select_training_subset(
    manifest: &DatasetManifest,
    generators: &[Generator],
    size: SubsetSize,
    seed: u64,
) -> Result<TrainingView> {
    if generators.is_empty() {
        return Err(Error::Dataset("no fake generators requested".into()));
    }
    for g in generators {
        if *g == Generator::Real {
            return Err(Error::Dataset("'real' is not a fake generator".into()));
        }
        if !manifest.entries.iter().any(|e| e.generator == *g) {
            return Err(Error::Dataset(alloc::format!(
                "generator {g} is absent from the manifest"
            )));
        }
    }
    let usable = |e: &&ManifestEntry| e.split == Split::Train && e.crf == Crf::Uncompressed;

    let mut fakes: BTreeMap<(&str, &Generator), &ManifestEntry> = BTreeMap::new();
    for e in manifest.entries.iter().filter(usable) {
        if let (Label::Fake, Some(src)) = (e.label, e.source_video_id.as_deref()) {
            let slot = fakes.entry((src, &e.generator)).or_insert(e);
            if e.video_id < slot.video_id {
                *slot = e;
            }
        }
    }

    let mut reals: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(usable)
        .filter(|e| e.label == Label::Real)
        .filter(|e| {
            generators
                .iter()
                .all(|g| fakes.contains_key(&(e.video_id.as_str(), g)))
        })
        .collect();
    reals.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    if let SubsetSize::Count(m) = size {
        if reals.len() < m {
            return Err(Error::Dataset(alloc::format!(
                "requested {m} training sources but only {} have matches for every generator",
                reals.len()
            )));
        }
        if reals.len() > m {
            reals.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            reals.truncate(m);
            reals.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        }
    }
    if reals.is_empty() {
        return Err(Error::Dataset("no eligible training sources".into()));
    }

    let mut train = Vec::with_capacity(reals.len() * (1 + generators.len()));
    for r in &reals {
        train.push((*r).clone());
    }
    for g in generators {
        for r in &reals {
            train.push(fakes[&(r.video_id.as_str(), g)].clone());
        }
    }
    let val = manifest
        .entries
        .iter()
        .filter(|e| e.split == Split::Val && e.crf == Crf::Uncompressed)
        .filter(|e| e.label == Label::Real || generators.contains(&e.generator))
        .cloned()
        .collect();
    Ok(TrainingView { train, val })
}

/// Fixture manifest: `sources` uncompressed real videos, each with one
/// derived fake per generator, all with `n_frames` frames and unassigned.
pub fn synthetic_manifest(sources: usize, generators: &[Generator], n_frames: usize) -> DatasetManifest {
    let mut entries = Vec::with_capacity(sources * (1 + generators.len()));
    for i in 0..sources {
        let real_id = alloc::format!("real{i:05}");
        for g in generators {
            let id = alloc::format!("{}{i:05}", g.tag().to_ascii_lowercase());
            entries.push(ManifestEntry {
                embedding_path: alloc::format!("{id}.vemb"),
                video_id: id,
                label: Label::Fake,
                generator: g.clone(),
                crf: Crf::Uncompressed,
                source_video_id: Some(real_id.clone()),
                split: Split::Unassigned,
                n_frames,
            });
        }
        entries.push(ManifestEntry {
            embedding_path: alloc::format!("{real_id}.vemb"),
            video_id: real_id,
            label: Label::Real,
            generator: Generator::Real,
            crf: Crf::Uncompressed,
            source_video_id: None,
            split: Split::Unassigned,
            n_frames,
        });
    }
    DatasetManifest { entries }
}
