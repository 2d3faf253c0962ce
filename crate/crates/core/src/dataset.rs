//! Dataset preparation: directory ingestion with deterministic ordering,
//! larger-side resizing, and scaling to the training range.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{load_image, resize_larger_side, scale_to_unit};
use crate::scalar::Real;
use crate::volume::Volume;

#[derive(Debug, Clone)]
pub struct DatasetItem<F> {
    pub name: String,
    /// 3-channel volume in [-1, 1].
    pub image: Volume<F>,
}

#[derive(Debug, Clone)]
pub struct Dataset<F> {
    items: Vec<DatasetItem<F>>,
    resize_target: Option<usize>,
}

impl<F: Real> Dataset<F> {
    pub fn from_items(items: Vec<DatasetItem<F>>, resize_target: Option<usize>) -> Self {
        Dataset {
            items,
            resize_target,
        }
    }

    /// Load every `.ppm`/`.pgm` file in a directory, in lexicographic file
    /// name order, resized so the larger side equals `resize_target` (when
    /// given) and scaled to [-1, 1].
    pub fn load_dir(dir: impl AsRef<Path>, resize_target: Option<usize>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            let is_raster = path
                .extension()
                .and_then(|e| e.to_str())
                .map(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("pgm"))
                .unwrap_or(false);
            if path.is_file() && is_raster {
                paths.push(path);
            }
        }
        paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

        let mut items = Vec::with_capacity(paths.len());
        for path in paths {
            let raw: Volume<F> = load_image(&path)?;
            let resized = match resize_target {
                Some(t) => resize_larger_side(&raw, t),
                None => raw,
            };
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".to_string());
            items.push(DatasetItem {
                name,
                image: scale_to_unit(&resized),
            });
        }
        Ok(Dataset {
            items,
            resize_target,
        })
    }

    #[inline]
    pub fn items(&self) -> &[DatasetItem<F>] {
        &self.items
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.items.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[inline]
    pub fn resize_target(&self) -> Option<usize> {
        self.resize_target
    }
}
