//! Synthetic smooth fields and low/high-resolution pair datasets.
//!
//! A synthetic field is a sum of random plane waves whose amplitudes fall off
//! as `|k|^-exponent`, rescaled to `[0, 1]`. Low-resolution inputs are box
//! averages of the high-resolution field.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::grid::{load_grid, save_grid, GridField, NormStats};
use crate::resample::{box_downsample, ResampleFactor};
use crate::rng;

pub const GRID_EXTENSION: &str = "gsr";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_fields: usize,
    pub height: usize,
    pub width: usize,
    pub factor: ResampleFactor,
    pub n_modes: usize,
    pub spectral_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_fields: 400,
            height: 256,
            width: 512,
            factor: ResampleFactor::FOUR,
            n_modes: 48,
            spectral_exponent: 2.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_fields == 0 || self.n_modes == 0 {
            return Err(Error::InvalidConfig("n_fields and n_modes must be >= 1".into()));
        }
        if !(self.spectral_exponent > 0.0) {
            return Err(Error::InvalidConfig("spectral exponent must be > 0".into()));
        }
        if self.height < 2 || self.width < 2 {
            return Err(Error::InvalidConfig(format!(
                "field must be at least 2x2, got {}x{}",
                self.height, self.width
            )));
        }
        let f = self.factor.get();
        if self.height % f != 0 || self.width % f != 0 {
            return Err(Error::NotDivisible {
                height: self.height,
                width: self.width,
                factor: f,
            });
        }
        Ok(())
    }

    /// Largest wavenumber, in cycles across the shorter side: at least eight
    /// high-resolution pixels per cycle.
    pub fn max_wavenumber(&self) -> f64 {
        (self.height.min(self.width) as f64 / 8.0).max(1.0)
    }
}

/// The `index`-th synthetic field of `spec`, values in `[0, 1]`.
pub fn generate_field(spec: &SyntheticSpec, index: usize) -> Result<GridField> {
    spec.validate()?;
    let mut rng = rng::indexed_stream(spec.seed, "datagen.field", index as u64);
    let (h, w) = (spec.height, spec.width);
    let side = h.min(w) as f64;
    let k_max = spec.max_wavenumber();

    struct Mode {
        ky: f64,
        kx: f64,
        amp: f64,
        phase: f64,
    }
    let modes: Vec<Mode> = (0..spec.n_modes)
        .map(|_| {
            // log-uniform magnitude in [1, k_max] cycles per shorter side
            let k = k_max.powf(rng.gen::<f64>());
            let theta = rng.gen_range(0.0..TAU);
            Mode {
                ky: TAU * k * theta.sin() / side,
                kx: TAU * k * theta.cos() / side,
                amp: k.powf(-spec.spectral_exponent),
                phase: rng.gen_range(0.0..TAU),
            }
        })
        .collect();

    let mut values = vec![0.0; h * w];
    for (i, row) in values.chunks_mut(w).enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = modes
                .iter()
                .map(|m| m.amp * (m.ky * i as f64 + m.kx * j as f64 + m.phase).cos())
                .sum();
        }
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if range > 0.0 {
        values.iter_mut().for_each(|v| *v = (*v - lo) / range);
    } else {
        values.iter_mut().for_each(|v| *v = 0.5);
    }
    Ok(GridField::new(h, w, values)?.with_labels("synthetic", "normalized"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
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
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub stem: String,
    pub lr: GridField,
    pub hr: GridField,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// `floor(0.7 n)` / `floor(0.15 n)` / remainder over `order`.
    pub fn from_order(order: &[usize]) -> Self {
        let n = order.len();
        let n_train = n * 7 / 10;
        let n_val = n * 15 / 100;
        Self {
            train: order[..n_train].to_vec(),
            val: order[n_train..n_train + n_val].to_vec(),
            test: order[n_train + n_val..].to_vec(),
        }
    }

    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_of(&self, index: usize) -> Option<Split> {
        [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .find(|s| self.get(*s).contains(&index))
    }
}

/// Aligned low/high-resolution pairs with a train/val/test split and
/// normalization stats from the training targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub pairs: Vec<FieldPair>,
    pub split: SplitIndices,
    pub stats: NormStats,
    pub factor: ResampleFactor,
}

impl PairDataset {
    pub fn new(pairs: Vec<FieldPair>, split: SplitIndices) -> Result<Self> {
        let first = pairs.first().ok_or(Error::EmptyDataset)?;
        let f = first.hr.height() / first.lr.height();
        let factor = ResampleFactor::new(f)?;
        for p in &pairs {
            if p.hr.height() != p.lr.height() * f || p.hr.width() != p.lr.width() * f {
                return Err(Error::PairDimensionMismatch(vec![p.stem.clone()]));
            }
        }
        let mut seen = vec![false; pairs.len()];
        for &i in split.train.iter().chain(&split.val).chain(&split.test) {
            if i >= pairs.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidConfig(format!("split index {i} repeated or out of range")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig("split does not cover every pair".into()));
        }
        if split.train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let stats = NormStats::from_fields(split.train.iter().map(|&i| &pairs[i].hr))?;
        Ok(Self {
            pairs,
            split,
            stats,
            factor,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn subset(&self, split: Split) -> impl Iterator<Item = &FieldPair> {
        self.split.get(split).iter().map(move |&i| &self.pairs[i])
    }

    /// Writes `<root>/lr/<stem>.gsr`, `<root>/hr/<stem>.gsr` and
    /// `<root>/manifest.txt` (`<stem> <split>` per line, in pair order).
    pub fn save(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        let (lr_dir, hr_dir) = (root.join("lr"), root.join("hr"));
        fs::create_dir_all(&lr_dir)?;
        fs::create_dir_all(&hr_dir)?;
        let mut manifest = String::new();
        for (i, p) in self.pairs.iter().enumerate() {
            let file = format!("{}.{GRID_EXTENSION}", p.stem);
            save_grid(&p.lr, lr_dir.join(&file))?;
            save_grid(&p.hr, hr_dir.join(&file))?;
            let split = self.split.split_of(i).expect("split covers every pair");
            manifest.push_str(&format!("{} {}\n", p.stem, split.as_str()));
        }
        fs::write(root.join(MANIFEST_FILE), manifest)?;
        Ok(())
    }

    /// Loads a directory written by [`PairDataset::save`]; the split comes
    /// from `manifest.txt` when present.
    pub fn load(root: impl AsRef<Path>) -> Result<(Self, Vec<String>)> {
        let root = root.as_ref();
        if !root.is_dir() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("dataset directory {} not found", root.display()),
            )));
        }
        let (mut ds, warnings) = load_pairs(root.join("lr"), root.join("hr"))?;
        let manifest_path = root.join(MANIFEST_FILE);
        if manifest_path.is_file() {
            let text = fs::read_to_string(manifest_path)?;
            let mut split = SplitIndices::default();
            let index: BTreeMap<&str, usize> =
                ds.pairs.iter().enumerate().map(|(i, p)| (p.stem.as_str(), i)).collect();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let (stem, s) = line
                    .split_once(' ')
                    .ok_or_else(|| Error::InvalidConfig(format!("bad manifest line {line:?}")))?;
                let Some(&i) = index.get(stem) else { continue };
                match Split::parse(s.trim())? {
                    Split::Train => split.train.push(i),
                    Split::Val => split.val.push(i),
                    Split::Test => split.test.push(i),
                }
            }
            ds = PairDataset::new(ds.pairs, split)?;
        }
        Ok((ds, warnings))
    }
}

/// Generates the dataset described by `spec`.
pub fn make_pairs(spec: &SyntheticSpec) -> Result<PairDataset> {
    spec.validate()?;
    let digits = (spec.n_fields.max(2) - 1).to_string().len().max(4);
    let pairs = (0..spec.n_fields)
        .map(|i| {
            let hr = generate_field(spec, i)?;
            let lr = box_downsample(&hr, spec.factor)?;
            Ok(FieldPair {
                stem: format!("f{i:0digits$}"),
                lr,
                hr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng::stream(spec.seed, "datagen.split"));
    PairDataset::new(pairs, SplitIndices::from_order(&order))
}

fn stems_in(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(GRID_EXTENSION) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

/// Pairs GSR1 files from two directories by identical file stem.
///
/// Files present on only one side are skipped with a warning (returned and
/// logged). Pairs whose dimensions are not an integer factor apart are all
/// reported in one error. Without a manifest the split follows sorted stem
/// order.
pub fn load_pairs(lr_dir: impl AsRef<Path>, hr_dir: impl AsRef<Path>) -> Result<(PairDataset, Vec<String>)> {
    let lr = stems_in(lr_dir.as_ref())?;
    let hr = stems_in(hr_dir.as_ref())?;
    let mut warnings = Vec::new();
    for stem in lr.keys().filter(|s| !hr.contains_key(*s)) {
        warnings.push(format!("{stem}: low-resolution file has no high-resolution match"));
    }
    for stem in hr.keys().filter(|s| !lr.contains_key(*s)) {
        warnings.push(format!("{stem}: high-resolution file has no low-resolution match"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut pairs = Vec::new();
    let mut mismatched = Vec::new();
    let mut factor = None;
    for (stem, lr_path) in &lr {
        let Some(hr_path) = hr.get(stem) else { continue };
        let lr_field = load_grid(lr_path)?;
        let hr_field = load_grid(hr_path)?;
        let (lh, lw) = lr_field.dims();
        let (hh, hw) = hr_field.dims();
        let f = hh / lh;
        let consistent = hh % lh == 0
            && hw == lw * f
            && ResampleFactor::new(f).is_ok()
            && *factor.get_or_insert(f) == f;
        if !consistent {
            mismatched.push(format!("{stem} ({lh}x{lw} vs {hh}x{hw})"));
            continue;
        }
        pairs.push(FieldPair {
            stem: stem.clone(),
            lr: lr_field,
            hr: hr_field,
        });
    }
    if !mismatched.is_empty() {
        return Err(Error::PairDimensionMismatch(mismatched));
    }
    if pairs.is_empty() {
        return Err(Error::NoMatchingPairs);
    }
    let order: Vec<usize> = (0..pairs.len()).collect();
    let split = SplitIndices::from_order(&order);
    // Tiny directories may round the train split to zero; keep them usable.
    let split = if split.train.is_empty() {
        SplitIndices {
            train: order,
            ..SplitIndices::default()
        }
    } else {
        split
    };
    Ok((PairDataset::new(pairs, split)?, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_fields: 10,
            height: 32,
            width: 64,
            factor: ResampleFactor::FOUR,
            seed: 11,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn field_is_deterministic_and_normalized() {
        let spec = small_spec();
        let a = generate_field(&spec, 3).unwrap();
        assert_eq!(a, generate_field(&spec, 3).unwrap());
        assert_ne!(a, generate_field(&spec, 4).unwrap());
        let (lo, hi) = a.min_max();
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn split_sizes() {
        let s = SplitIndices::from_order(&(0..400).collect::<Vec<_>>());
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (280, 60, 60));
        let s = SplitIndices::from_order(&(0..10).collect::<Vec<_>>());
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
    }

    #[test]
    fn pairs_are_consistent() {
        let ds = make_pairs(&small_spec()).unwrap();
        assert_eq!(ds.len(), 10);
        for p in &ds.pairs {
            assert_eq!(p.lr.dims(), (8, 16));
            assert_eq!(p.lr, box_downsample(&p.hr, ResampleFactor::FOUR).unwrap());
            assert!((p.lr.mean() - p.hr.mean()).abs() < 1e-10);
        }
        assert_eq!(ds, make_pairs(&small_spec()).unwrap());
        assert_eq!(ds.stats, NormStats::new(0.0, 1.0).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let spec = SyntheticSpec {
            height: 63,
            ..small_spec()
        };
        assert!(matches!(make_pairs(&spec), Err(Error::NotDivisible { .. })));
        let spec = SyntheticSpec {
            n_fields: 0,
            ..small_spec()
        };
        assert!(make_pairs(&spec).is_err());
    }

    #[test]
    fn save_and_load_directory() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_pairs(&small_spec()).unwrap();
        ds.save(dir.path()).unwrap();
        let (back, warnings) = PairDataset::load(dir.path()).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(back.len(), ds.len());
        for split in [Split::Train, Split::Val, Split::Test] {
            let a: Vec<_> = ds.subset(split).map(|p| p.stem.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let b: Vec<_> = back.subset(split).map(|p| p.stem.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn load_pairs_matching() {
        let dir = tempfile::tempdir().unwrap();
        let (lr, hr) = (dir.path().join("lr"), dir.path().join("hr"));
        fs::create_dir_all(&lr).unwrap();
        fs::create_dir_all(&hr).unwrap();
        let small = GridField::filled(4, 4, 0.5).unwrap();
        let big = GridField::filled(8, 8, 0.5).unwrap();
        save_grid(&small, lr.join("a.gsr")).unwrap();
        save_grid(&small, lr.join("b.gsr")).unwrap();
        save_grid(&big, hr.join("b.gsr")).unwrap();
        save_grid(&big, hr.join("c.gsr")).unwrap();
        let err = load_pairs(&lr, &hr).unwrap_err();
        // one constant pair cannot produce normalization stats
        assert!(matches!(err, Error::DegenerateStats { .. }));

        let varied = GridField::from_fn(8, 8, |i, j| (i + j) as f64).unwrap();
        save_grid(&varied, hr.join("b.gsr")).unwrap();
        let (ds, warnings) = load_pairs(&lr, &hr).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.pairs[0].stem, "b");
        assert_eq!(warnings.len(), 2);

        save_grid(&GridField::filled(6, 8, 0.5).unwrap(), hr.join("b.gsr")).unwrap();
        match load_pairs(&lr, &hr) {
            Err(Error::PairDimensionMismatch(stems)) => assert!(stems[0].starts_with("b ")),
            other => panic!("{other:?}"),
        }

        fs::remove_file(hr.join("b.gsr")).unwrap();
        assert!(matches!(load_pairs(&lr, &hr), Err(Error::NoMatchingPairs)));
    }
}
