//! Loading and saving dataset bundles as a metadata file plus a features file.

use std::fs;
use std::path::Path;

use scen_core::DatasetBundle;

use crate::error::{Error, Result};
use crate::{features, metadata};

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn bundle_from_parts(meta: metadata::Metadata, feats: scen_core::Tensor) -> Result<DatasetBundle> {
    if feats.rows() != meta.labels.len() {
        return Err(Error::Features {
            offset: features::N_ROWS_OFFSET,
            msg: format!("n_rows is {} but the metadata lists {} images", feats.rows(), meta.labels.len()),
        });
    }
    Ok(DatasetBundle::new(
        meta.state_names,
        meta.object_names,
        feats,
        meta.labels,
        meta.seen_pairs,
        meta.unseen_pairs,
        meta.splits,
    )?)
}

pub fn load_bundle(metadata_path: &Path, features_path: &Path) -> Result<DatasetBundle> {
    let text = String::from_utf8(read(metadata_path)?).map_err(|e| Error::Metadata {
        line: 0,
        msg: format!("not UTF-8: {e}"),
    })?;
    let meta = metadata::parse(&text)?;
    let feats = features::decode(&read(features_path)?)?;
    bundle_from_parts(meta, feats)
}

pub fn save_bundle(bundle: &DatasetBundle, metadata_path: &Path, features_path: &Path) -> Result<()> {
    write(metadata_path, metadata::render(&metadata::Metadata::of(bundle)).as_bytes())?;
    write(features_path, &features::encode(bundle.features()))
}
