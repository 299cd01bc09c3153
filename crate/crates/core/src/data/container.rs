//! Directory container: `manifest.json`, `data.bin` (f32 LE) and
//! `labels.bin` (u32 LE). The manifest checksum is SHA-256 over the bytes
//! of `data.bin` followed by those of `labels.bin`.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::{Dataset, Manifest};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

pub(crate) fn checksum(data: &[f32], labels: &[u32]) -> String {
    let mut h = Sha256::new();
    h.update(f32_bytes(data));
    h.update(u32_bytes(labels));
    let digest = h.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

pub fn f32_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn u32_bytes(v: &[u32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn write_container(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = ds.manifest.clone();
    manifest.checksum = checksum(ds.raw_data(), ds.raw_labels());
    fs::write(dir.join("data.bin"), f32_bytes(ds.raw_data()))?;
    fs::write(dir.join("labels.bin"), u32_bytes(ds.raw_labels()))?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn read_container(dir: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(v) = raw.get("version").and_then(|v| v.as_u64()) {
        if v != u64::from(MANIFEST_VERSION) {
            return Err(Error::Format(format!(
                "unknown manifest version {v} (expected {MANIFEST_VERSION})"
            )));
        }
    }
    let manifest: Manifest = serde_json::from_value(raw)?;
    manifest.validate()?;
    let data_bytes = fs::read(dir.join("data.bin"))?;
    let label_bytes = fs::read(dir.join("labels.bin"))?;
    let n = manifest.num_samples;
    let want_data = n * manifest.sample_len() * 4;
    if data_bytes.len() != want_data {
        return Err(Error::Format(format!(
            "data.bin has {} bytes, expected {want_data} (truncated or oversized)",
            data_bytes.len()
        )));
    }
    if label_bytes.len() % 4 != 0 || (n > 0 && label_bytes.len() / 4 % n != 0) {
        return Err(Error::Format(format!(
            "labels.bin has {} bytes, not a whole number of u32 rows",
            label_bytes.len()
        )));
    }
    let data: Vec<f32> = data_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let labels: Vec<u32> = label_bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let found = checksum(&data, &labels);
    if found != manifest.checksum {
        return Err(Error::Checksum {
            expected: manifest.checksum.clone(),
            found,
        });
    }
    Dataset::new(manifest, data, labels)
}
