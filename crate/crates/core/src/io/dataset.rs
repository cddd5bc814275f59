//! Dataset directories: `manifest.json` plus, per case, `<id>.image.bdlv`,
//! `<id>.labels.bdlv` and `<id>.spec.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::{Dataset, PhantomCase, PhantomDistribution, PhantomSpec};

use super::volume::{read_labels, read_scalar, write_labels, write_scalar};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub distribution: PhantomDistribution,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_case(case: &PhantomCase, dir: &Path) -> Result<()> {
    write_scalar(&case.image, &dir.join(format!("{}.image.bdlv", case.id)))?;
    write_labels(&case.labels, &dir.join(format!("{}.labels.bdlv", case.id)))?;
    write_json(&case.spec, &dir.join(format!("{}.spec.json", case.id)))
}

pub fn read_case(dir: &Path, id: &str) -> Result<PhantomCase> {
    let image = read_scalar(&dir.join(format!("{id}.image.bdlv")))?;
    let labels = read_labels(&dir.join(format!("{id}.labels.bdlv")))?;
    let spec: PhantomSpec = read_json(&dir.join(format!("{id}.spec.json")))?;
    if image.dims() != labels.dims() {
        return Err(Error::Format(format!("{id}: image and labels differ in shape")));
    }
    labels
        .validate_labels(3)
        .map_err(|e| Error::Format(format!("{id}: {e}")))?;
    Ok(PhantomCase {
        id: id.to_string(),
        image,
        whole_tumour: labels.foreground(),
        labels,
        spec,
    })
}

pub fn write_dataset(data: &Dataset, seed: u64, dist: &PhantomDistribution, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ids = |cs: &[PhantomCase]| cs.iter().map(|c| c.id.clone()).collect();
    let manifest = Manifest {
        seed,
        distribution: dist.clone(),
        train: ids(&data.train),
        val: ids(&data.val),
        test: ids(&data.test),
    };
    for case in data.train.iter().chain(&data.val).chain(&data.test) {
        write_case(case, dir)?;
    }
    write_json(&manifest, &dir.join(MANIFEST))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST))
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Dataset)> {
    let m = read_manifest(dir)?;
    let load = |ids: &[String]| ids.iter().map(|id| read_case(dir, id)).collect::<Result<Vec<_>>>();
    let data = Dataset {
        train: load(&m.train)?,
        val: load(&m.val)?,
        test: load(&m.test)?,
    };
    Ok((m, data))
}
