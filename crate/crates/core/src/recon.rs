//! Reconstruction from subsampled k-space.
//!
//! Policy gradients never differentiate through the reconstructor, so any
//! deterministic map from masked k-space to an image can be plugged in. The
//! reference is the zero-filled magnitude reconstruction; precomputed outputs
//! of an external model can be served from a directory of PGM files.

use std::collections::HashMap;
use std::path::Path;

use crate::datagen::read_pgm;
use crate::error::{Error, Result};
use crate::kspace::{inverse_transform, ColumnMask, Image, KSpaceGrid};

#[derive(Clone, Debug)]
pub enum Reconstructor {
    /// Magnitude of the inverse transform of zero-filled k-space.
    ZeroFilled,
    /// Lookup of precomputed reconstructions.
    ExternalTable(ExternalTable),
}

impl Reconstructor {
    /// Reconstructs `ks_masked`, which must be the k-space of item `item_id`
    /// restricted to `mask`.
    pub fn reconstruct(
        &self,
        item_id: &str,
        mask: &ColumnMask,
        ks_masked: &KSpaceGrid,
    ) -> Result<Image> {
        match self {
            Reconstructor::ZeroFilled => zero_filled(ks_masked),
            Reconstructor::ExternalTable(table) => {
                let img = table.get(item_id, mask)?;
                if img.height() != ks_masked.height() || img.width() != ks_masked.width() {
                    return Err(Error::invalid(format!(
                        "table reconstruction for `{item_id}` is {}x{}, k-space is {}x{}",
                        img.height(),
                        img.width(),
                        ks_masked.height(),
                        ks_masked.width()
                    )));
                }
                Ok(img.clone())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Reconstructor::ZeroFilled => "zero_filled",
            Reconstructor::ExternalTable(_) => "external_table",
        }
    }
}

pub fn zero_filled(ks_masked: &KSpaceGrid) -> Result<Image> {
    let pixels = inverse_transform(ks_masked).iter().map(|v| v.norm()).collect();
    Image::new(ks_masked.height(), ks_masked.width(), pixels)
}

/// Precomputed reconstructions keyed by `(item id, mask hex)`.
///
/// On disk this is a directory of binary PGM files named
/// `<item_id>__<mask_hex>.pgm`, where `mask_hex` is [`ColumnMask::to_hex`].
#[derive(Clone, Debug, Default)]
pub struct ExternalTable {
    entries: HashMap<(String, String), Image>,
}

impl ExternalTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item_id: &str, mask: &ColumnMask, image: Image) {
        self.entries
            .insert((item_id.to_string(), mask.to_hex()), image);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, item_id: &str, mask: &ColumnMask) -> Result<&Image> {
        let hex = mask.to_hex();
        self.entries
            .get(&(item_id.to_string(), hex.clone()))
            .ok_or(Error::MissingReconstruction {
                item: item_id.to_string(),
                mask: hex,
            })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let listing = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut table = ExternalTable::new();
        for entry in listing {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
                continue;
            }
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::parse(&path, "file name is not valid UTF-8"))?;
            let (item, hex) = stem
                .rsplit_once("__")
                .ok_or_else(|| Error::parse(&path, "expected `<item_id>__<mask_hex>.pgm`"))?;
            if hex.is_empty() || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(Error::parse(&path, format!("`{hex}` is not a hex mask")));
            }
            let image = read_pgm(&path)?;
            table
                .entries
                .insert((item.to_string(), hex.to_ascii_lowercase()), image);
        }
        Ok(table)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for ((item, hex), image) in &self.entries {
            let path = dir.join(format!("{item}__{hex}.pgm"));
            crate::datagen::write_pgm(image, 1.0, &path)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{apply_mask, forward_transform};
    use crate::metrics::{ssim, SsimConfig};
    use rand::{Rng, SeedableRng};

    fn random_nonneg(seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image::new(16, 16, (0..256).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn full_mask_reproduces_nonnegative_input() {
        let x = random_nonneg(3);
        let ks = forward_transform(&x);
        let full = ColumnMask::full(16);
        let out = Reconstructor::ZeroFilled
            .reconstruct("a", &full, &apply_mask(&ks, &full).unwrap())
            .unwrap();
        for (a, b) in out.pixels().iter().zip(x.pixels()) {
            assert!((a - b).abs() < 1e-10);
        }
        let s = ssim(&x, &out, &SsimConfig::new(x.max()).unwrap()).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_gives_zero_image() {
        let ks = forward_transform(&random_nonneg(4));
        let empty = ColumnMask::empty(16);
        let out = zero_filled(&apply_mask(&ks, &empty).unwrap()).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn dc_column_recovers_constant_image() {
        let c = 0.4;
        let ks = forward_transform(&Image::filled(8, 8, c).unwrap());
        let dc = ColumnMask::from_columns(8, &[4]).unwrap();
        let out = zero_filled(&apply_mask(&ks, &dc).unwrap()).unwrap();
        assert!(out.pixels().iter().all(|p| (p - c).abs() < 1e-10));
    }

    #[test]
    fn zero_filled_is_deterministic() {
        let ks = forward_transform(&random_nonneg(5));
        let m = ColumnMask::from_columns(16, &[1, 7, 8, 9]).unwrap();
        let masked = apply_mask(&ks, &m).unwrap();
        let a = zero_filled(&masked).unwrap();
        let b = zero_filled(&masked).unwrap();
        assert!(a
            .pixels()
            .iter()
            .zip(b.pixels())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn table_miss_names_item_and_mask() {
        let table = Reconstructor::ExternalTable(ExternalTable::new());
        let m = ColumnMask::from_columns(8, &[3, 4]).unwrap();
        let ks = forward_transform(&Image::zeros(8, 8).unwrap());
        match table.reconstruct("knee_7", &m, &ks) {
            Err(Error::MissingReconstruction { item, mask }) => {
                assert_eq!(item, "knee_7");
                assert_eq!(mask, "18");
            }
            other => panic!("expected a miss, got {other:?}"),
        }
    }

    #[test]
    fn table_round_trips_through_directory() {
        let dir = std::env::temp_dir().join(format!("kspace-table-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let m = ColumnMask::from_columns(8, &[3, 4]).unwrap();
        let img = Image::filled(8, 8, 1.0).unwrap();
        let mut table = ExternalTable::new();
        table.insert("item__x", &m, img.clone());
        table.save(&dir).unwrap();

        let loaded = ExternalTable::load(&dir).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded.get("item__x", &m).unwrap(), &img);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
