//! Pair manifests and deterministic train/val/test splits.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::io::load_image;
use super::stream_rng;
use crate::error::{Error, Result};
use crate::raster::PlanarImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split tag {other:?}"))),
        }
    }
}

/// One sRGB/XYZ file pair with its split tag.
#[derive(Debug, Clone)]
pub struct PairEntry {
    pub srgb_path: PathBuf,
    pub xyz_path: PathBuf,
    pub split: Split,
}

/// A loaded, size-matched image pair.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub srgb: PlanarImage,
    pub xyz: PlanarImage,
}

impl ImagePair {
    pub fn new(srgb: PlanarImage, xyz: PlanarImage) -> Result<Self> {
        srgb.check_same_shape(&xyz)?;
        Ok(Self { srgb, xyz })
    }
}

#[derive(Debug, Clone, Default)]
pub struct PairSet {
    pub entries: Vec<PairEntry>,
}

impl PairSet {
    pub fn with_split(&self, split: Split) -> Vec<&PairEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn load_entry(entry: &PairEntry) -> Result<ImagePair> {
        let srgb = load_image(&entry.srgb_path)?;
        let xyz = load_image(&entry.xyz_path)?;
        ImagePair::new(srgb, xyz)
    }

    /// Manifest CSV with columns srgb_path, xyz_path, split.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["srgb_path", "xyz_path", "split"]).map_err(|e| csv_err(path, e))?;
        for e in &self.entries {
            w.write_record([
                e.srgb_path.to_string_lossy().as_ref(),
                e.xyz_path.to_string_lossy().as_ref(),
                e.split.as_str(),
            ])
            .map_err(|er| csv_err(path, er))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_manifest(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut entries = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| csv_err(path, e))?;
            if record.len() != 3 {
                return Err(Error::format(path, format!("manifest row needs 3 columns, got {}", record.len())));
            }
            entries.push(PairEntry {
                srgb_path: PathBuf::from(&record[0]),
                xyz_path: PathBuf::from(&record[1]),
                split: Split::parse(&record[2])?,
            });
        }
        Ok(Self { entries })
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, format!("csv error: {e}"))
}

/// Deterministic shuffled partition. Fractions are renormalized; val/test
/// sizes round down and the remainder goes to train.
pub fn split_pairs(
    pairs: Vec<(PathBuf, PathBuf)>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<PairSet> {
    if pairs.is_empty() {
        return Err(Error::Config("cannot split an empty pair list".into()));
    }
    let (ft, fv, fs) = fractions;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 || ft + fv + fs <= 0.0 {
        return Err(Error::Config(format!("bad split fractions {fractions:?}")));
    }
    let total = ft + fv + fs;
    let n = pairs.len();
    let n_val = (n as f64 * fv / total).floor() as usize;
    let n_test = (n as f64 * fs / total).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(&[seed, 0x5b117]);
    order.shuffle(&mut rng);

    let mut entries: Vec<Option<PairEntry>> = vec![None; n];
    for (rank, &idx) in order.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        let (srgb_path, xyz_path) = pairs[idx].clone();
        entries[idx] = Some(PairEntry { srgb_path, xyz_path, split });
    }
    Ok(PairSet { entries: entries.into_iter().map(Option::unwrap).collect() })
}
