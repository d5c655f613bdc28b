//! Synthetic phantom datasets, PGM interchange and train/val/test splits.

use std::collections::HashSet;
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kspace::Image;
use crate::seeding::{child_rng, rng_from_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataItem {
    pub id: String,
    pub image: Image,
    /// Maximum ground-truth pixel value, used as the SSIM dynamic range.
    /// Falls back to 1 for an all-zero image.
    pub dynamic_range: f64,
    pub split: Split,
}

impl DataItem {
    pub fn new(id: impl Into<String>, image: Image) -> Self {
        let max = image.max();
        DataItem {
            id: id.into(),
            dynamic_range: if max > 0.0 { max } else { 1.0 },
            image,
            split: Split::Train,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    items: Vec<DataItem>,
}

impl Dataset {
    pub fn new(items: Vec<DataItem>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("dataset is empty"))?;
        let (h, w) = (first.image.height(), first.image.width());
        let mut ids = HashSet::new();
        for item in &items {
            if item.image.height() != h || item.image.width() != w {
                return Err(Error::invalid(format!(
                    "item `{}` is {}x{}, expected {h}x{w}",
                    item.id,
                    item.image.height(),
                    item.image.width()
                )));
            }
            if !ids.insert(item.id.as_str()) {
                return Err(Error::invalid(format!("duplicate item id `{}`", item.id)));
            }
        }
        Ok(Dataset { items })
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn height(&self) -> usize {
        self.items[0].image.height()
    }

    pub fn width(&self) -> usize {
        self.items[0].image.width()
    }

    pub fn split(&self, split: Split) -> Vec<&DataItem> {
        self.items.iter().filter(|i| i.split == split).collect()
    }

    /// Writes `id,split,dynamic_range` rows with a header.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id,split,dynamic_range\n");
        for item in &self.items {
            out.push_str(&format!("{},{},{}\n", item.id, item.split, item.dynamic_range));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Applies split assignments from a manifest written by
    /// [`Dataset::write_manifest`]; items missing from it keep their split.
    pub fn apply_manifest(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (n, line) in text.lines().enumerate().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse(path, format!("line {}: expected 3 fields", n + 1)));
            }
            let split: Split = fields[1]
                .parse()
                .map_err(|e: Error| Error::parse(path, format!("line {}: {e}", n + 1)))?;
            if let Some(item) = self.items.iter_mut().find(|i| i.id == fields[0]) {
                item.split = split;
            }
        }
        Ok(())
    }
}

/// One additive ellipse in normalized coordinates `[-1, 1]^2`.
#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
    intensity: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

fn random_ellipse(rng: &mut crate::seeding::Rng, off_center: bool) -> Ellipse {
    let cx = if off_center {
        let mag = rng.gen_range(0.25..0.55);
        if rng.gen::<bool>() {
            mag
        } else {
            -mag
        }
    } else {
        rng.gen_range(-0.5..0.5)
    };
    Ellipse {
        cx,
        cy: rng.gen_range(-0.5..0.5),
        a: rng.gen_range(0.1..0.45),
        b: rng.gen_range(0.1..0.45),
        theta: rng.gen_range(0.0..std::f64::consts::PI),
        intensity: rng.gen_range(0.2..1.0),
    }
}

/// A single phantom: 3 to 6 additive ellipses on a zero background, clipped
/// to `[0, 1]`, with the first ellipse forced off the vertical midline.
pub fn generate_phantom(size: usize, seed: u64) -> Result<Image> {
    if size < 16 {
        return Err(Error::invalid(format!("phantom size must be >= 16, got {size}")));
    }
    let mut rng = rng_from_seed(seed);
    let count = rng.gen_range(3..=6);
    let ellipses: Vec<Ellipse> = (0..count).map(|i| random_ellipse(&mut rng, i == 0)).collect();
    let mut pixels = vec![0.0; size * size];
    for r in 0..size {
        let y = 2.0 * (r as f64 + 0.5) / size as f64 - 1.0;
        for c in 0..size {
            let x = 2.0 * (c as f64 + 0.5) / size as f64 - 1.0;
            let v: f64 = ellipses
                .iter()
                .filter(|e| e.contains(x, y))
                .map(|e| e.intensity)
                .sum();
            pixels[r * size + c] = v.clamp(0.0, 1.0);
        }
    }
    Image::new(size, size, pixels)
}

/// `count` phantoms of side `size`; item `i` is generated from the seed
/// derived for index `i`, so the dataset is bit-reproducible.
pub fn generate_phantoms(count: usize, size: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::invalid("phantom count must be at least 1"));
    }
    let items = (0..count)
        .map(|i| {
            let s = crate::seeding::derive_seed(seed, "phantom", i as u64);
            Ok(DataItem::new(format!("phantom_{i:05}"), generate_phantom(size, s)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(items)
}

/// Seeded shuffle followed by a contiguous train/val/test partition.
///
/// Split sizes are `floor(n * train)`, `floor(n * val)` and the remainder.
pub fn split_dataset(mut ds: Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let n = ds.items.len();
    let n_train = (n as f64 * ft + 1e-9).floor() as usize;
    let n_val = (n as f64 * fv + 1e-9).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::invalid(format!(
            "fractions {fractions:?} leave an empty split for {n} items"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut child_rng(seed, "split", 0));
    for (rank, &idx) in order.iter().enumerate() {
        ds.items[idx].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(ds)
}

/// Reads a binary (P5) PGM and scales pixels to `[0, 1]` by its maxval.
pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|msg| Error::parse(path, msg))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if header[0] != "P5" {
        return Err(format!("unsupported magic `{}` (need P5)", header[0]));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| format!("bad {what} `{s}` in header"))
    };
    let width = num(&header[1], "width")?;
    let height = num(&header[2], "height")?;
    let maxval = num(&header[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let depth = if maxval < 256 { 1 } else { 2 };
    let need = width * height * depth;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| format!("raster truncated: need {need} bytes"))?;
    let pixels = raster
        .chunks(depth)
        .map(|c| {
            let v = if depth == 1 {
                c[0] as f64
            } else {
                u16::from_be_bytes([c[0], c[1]]) as f64
            };
            v / maxval as f64
        })
        .collect();
    Image::new(height, width, pixels).map_err(|e| e.to_string())
}

/// Writes an 8-bit P5 PGM with pixel `p` stored as `round(255 * p / dynamic_range)`.
pub fn write_pgm(image: &Image, dynamic_range: f64, path: &Path) -> Result<()> {
    if !(dynamic_range > 0.0) {
        return Err(Error::invalid("PGM dynamic range must be positive"));
    }
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(
        image
            .pixels()
            .iter()
            .map(|p| (255.0 * p / dynamic_range).round().clamp(0.0, 255.0) as u8),
    );
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Loads every `.pgm` file in `dir` (sorted by name); ids are file stems.
pub fn load_pgm_dataset(dir: &Path) -> Result<Dataset> {
    let listing = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in listing {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no PGM files found in {}",
            dir.display()
        )));
    }
    paths.sort();
    let items = paths
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::parse(p, "file name is not valid UTF-8"))?;
            Ok(DataItem::new(id, read_pgm(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(items).map_err(|e| Error::parse(dir, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("kspace-datagen-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let a = generate_phantoms(5, 32, 9).unwrap();
        let b = generate_phantoms(5, 32, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_phantoms(5, 32, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn phantoms_are_clipped_and_nonempty() {
        let ds = generate_phantoms(20, 32, 1).unwrap();
        for item in ds.items() {
            assert!(item.image.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
            assert!(item.dynamic_range > 0.0);
        }
        assert!(generate_phantoms(0, 32, 1).is_err());
        assert!(generate_phantom(15, 1).is_err());
    }

    #[test]
    fn mean_intensity_health_band() {
        let ds = generate_phantoms(1000, 16, 2024).unwrap();
        let mean = ds
            .items()
            .iter()
            .map(|i| i.image.pixels().iter().sum::<f64>() / 256.0)
            .sum::<f64>()
            / 1000.0;
        assert!(mean > 0.05 && mean < 0.6, "mean intensity {mean}");
    }

    #[test]
    fn splits_have_expected_sizes_and_partition() {
        let ds = split_dataset(generate_phantoms(100, 16, 3).unwrap(), (0.6, 0.2, 0.2), 4).unwrap();
        assert_eq!(ds.split(Split::Train).len(), 60);
        assert_eq!(ds.split(Split::Val).len(), 20);
        assert_eq!(ds.split(Split::Test).len(), 20);

        let again = split_dataset(generate_phantoms(100, 16, 3).unwrap(), (0.6, 0.2, 0.2), 4).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = generate_phantoms(10, 16, 3).unwrap();
        assert!(split_dataset(ds.clone(), (0.5, 0.5, 0.5), 1).is_err());
        assert!(split_dataset(ds.clone(), (0.98, 0.01, 0.01), 1).is_err());
        assert!(split_dataset(ds, (1.0, 0.0, 0.0), 1).is_err());
    }

    #[test]
    fn pgm_constant_and_zero_bytes() {
        let dir = temp_dir("bytes");
        let ones = Image::filled(8, 8, 1.0).unwrap();
        write_pgm(&ones, 1.0, &dir.join("a.pgm")).unwrap();
        let bytes = std::fs::read(dir.join("a.pgm")).unwrap();
        assert!(bytes.ends_with(&[255u8; 64]));
        assert_eq!(read_pgm(&dir.join("a.pgm")).unwrap(), ones);

        write_pgm(&Image::zeros(8, 8).unwrap(), 1.0, &dir.join("z.pgm")).unwrap();
        let bytes = std::fs::read(dir.join("z.pgm")).unwrap();
        assert!(bytes.ends_with(&[0u8; 64]));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn pgm_round_trip_within_quantization() {
        let dir = temp_dir("roundtrip");
        let ds = generate_phantoms(3, 16, 5).unwrap();
        for item in ds.items() {
            write_pgm(&item.image, 1.0, &dir.join(format!("{}.pgm", item.id))).unwrap();
        }
        let loaded = load_pgm_dataset(&dir).unwrap();
        assert_eq!(loaded.len(), 3);
        for (a, b) in ds.items().iter().zip(loaded.items()) {
            assert_eq!(a.id, b.id);
            for (p, q) in a.image.pixels().iter().zip(b.image.pixels()) {
                assert!((p - q).abs() <= 1.0 / (2.0 * 255.0) + 1e-12);
            }
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn loader_errors_are_descriptive() {
        let dir = temp_dir("errors");
        let err = load_pgm_dataset(&dir).unwrap_err().to_string();
        assert!(err.contains(&dir.display().to_string()), "{err}");

        std::fs::write(dir.join("bad.pgm"), b"P2\n8 8\n255\n").unwrap();
        assert!(matches!(load_pgm_dataset(&dir), Err(Error::Parse { .. })));
        std::fs::remove_file(dir.join("bad.pgm")).unwrap();

        write_pgm(&Image::zeros(8, 8).unwrap(), 1.0, &dir.join("a.pgm")).unwrap();
        write_pgm(&Image::zeros(8, 9).unwrap(), 1.0, &dir.join("b.pgm")).unwrap();
        assert!(load_pgm_dataset(&dir).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn manifest_round_trip() {
        let dir = temp_dir("manifest");
        let ds = split_dataset(generate_phantoms(10, 16, 3).unwrap(), (0.6, 0.2, 0.2), 4).unwrap();
        ds.write_manifest(&dir.join("m.csv")).unwrap();
        let mut fresh = generate_phantoms(10, 16, 3).unwrap();
        fresh.apply_manifest(&dir.join("m.csv")).unwrap();
        assert_eq!(fresh, ds);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
