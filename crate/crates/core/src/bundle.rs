//! Plan bundles: a directory holding `manifest.json`, one raw mask file per
//! structure and a raw dose file.
//!
//! Mask files hold one byte per voxel (0 or 1). The dose file and the
//! optional background volume hold little-endian `f32` values. Both use
//! x-fastest row-major voxel order.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DoseGrid, Rgb, Role, StructureMask, VoxelGrid3D, VoxelSet};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DOSE_FILE: &str = "dose.f32";
pub const BACKGROUND_FILE: &str = "background.f32";
pub const FORMAT_VERSION: u32 = 1;

/// A validated treatment plan: structures and dose on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanBundle {
    grid: VoxelGrid3D,
    structures: Vec<StructureMask>,
    dose: DoseGrid,
    prescription_dose: f64,
    background: Option<Vec<f32>>,
    pub metadata: BTreeMap<String, String>,
}

impl PlanBundle {
    pub fn new(
        structures: Vec<StructureMask>,
        dose: DoseGrid,
        prescription_dose: f64,
    ) -> Result<Self> {
        let plan = PlanBundle {
            grid: dose.grid,
            structures,
            dose,
            prescription_dose,
            background: None,
            metadata: BTreeMap::new(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_background(mut self, values: Vec<f32>) -> Result<Self> {
        check_background(&self.grid, &values, BACKGROUND_FILE)?;
        self.background = Some(values);
        Ok(self)
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.prescription_dose.is_finite() && self.prescription_dose > 0.0) {
            return Err(Error::InvalidPrescription(self.prescription_dose));
        }
        let mut names = HashSet::new();
        for s in &self.structures {
            s.check_grid(&self.grid)?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::DuplicateName(s.name.clone()));
            }
            if s.is_empty() {
                return Err(Error::EmptyStructure(s.name.clone()));
            }
        }
        if let Some(bg) = &self.background {
            check_background(&self.grid, bg, BACKGROUND_FILE)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> &VoxelGrid3D {
        &self.grid
    }

    pub fn structures(&self) -> &[StructureMask] {
        &self.structures
    }

    pub fn structure(&self, name: &str) -> Option<&StructureMask> {
        self.structures.iter().find(|s| s.name == name)
    }

    pub fn dose(&self) -> &DoseGrid {
        &self.dose
    }

    pub fn prescription_dose(&self) -> f64 {
        self.prescription_dose
    }

    pub fn background(&self) -> Option<&[f32]> {
        self.background.as_deref()
    }
}

fn check_background(grid: &VoxelGrid3D, values: &[f32], file: &str) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            file: file.into(),
            expected: grid.len() * 4,
            actual: values.len() * 4,
        });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDose {
            file: file.into(),
            index,
        });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    grid: VoxelGrid3D,
    prescription_dose_gy: f64,
    structures: Vec<StructureEntry>,
    dose: FileEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background: Option<FileEntry>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureEntry {
    name: String,
    role: Role,
    color: Rgb,
    mask_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEntry {
    file: String,
}

fn mask_file_name(index: usize) -> String {
    format!("mask_{index:03}.u8")
}

/// Writes the bundle to `dir`. An existing bundle at `dir` is replaced by
/// staging the new one in a sibling directory and renaming it into place.
pub fn save_bundle(plan: &PlanBundle, dir: impl AsRef<Path>) -> Result<()> {
    plan.validate()?;
    let dir = dir.as_ref();
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let leaf = dir
        .file_name()
        .ok_or_else(|| Error::Manifest(format!("bundle path {} has no name", dir.display())))?
        .to_string_lossy()
        .into_owned();
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;

    let staging = parent.join(format!(".{leaf}.staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;
    if let Err(e) = write_contents(plan, &staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }

    if dir.exists() {
        let retired = parent.join(format!(".{leaf}.retired-{}", std::process::id()));
        fs::rename(dir, &retired).map_err(|e| Error::io(dir, e))?;
        fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
        fs::remove_dir_all(&retired).map_err(|e| Error::io(&retired, e))?;
    } else {
        fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_contents(plan: &PlanBundle, dir: &Path) -> Result<()> {
    let mut structures = Vec::with_capacity(plan.structures.len());
    for (i, s) in plan.structures.iter().enumerate() {
        let file = mask_file_name(i);
        let bytes: Vec<u8> = (0..plan.grid.len())
            .map(|v| u8::from(s.occupancy().contains(v)))
            .collect();
        write_file(&dir.join(&file), &bytes)?;
        structures.push(StructureEntry {
            name: s.name.clone(),
            role: s.role,
            color: s.color,
            mask_file: file,
        });
    }
    write_file(&dir.join(DOSE_FILE), &f32_bytes(plan.dose.values()))?;
    let background = match &plan.background {
        Some(bg) => {
            write_file(&dir.join(BACKGROUND_FILE), &f32_bytes(bg))?;
            Some(FileEntry {
                file: BACKGROUND_FILE.into(),
            })
        }
        None => None,
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        grid: plan.grid,
        prescription_dose_gy: plan.prescription_dose,
        structures,
        dose: FileEntry {
            file: DOSE_FILE.into(),
        },
        background,
        metadata: plan.metadata.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Manifest(e.to_string()))?;
    json.push(b'\n');
    write_file(&dir.join(MANIFEST_FILE), &json)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<PlanBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = read_file(&manifest_path)?;
    let manifest: Manifest =
        serde_json::from_slice(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    let grid = manifest.grid;
    grid.validate()?;
    let n = grid.len();

    let mut seen = HashSet::new();
    let mut structures = Vec::with_capacity(manifest.structures.len());
    for entry in &manifest.structures {
        if !seen.insert(entry.name.as_str()) {
            return Err(Error::DuplicateName(entry.name.clone()));
        }
        let bytes = read_file(&bundle_path(dir, &entry.mask_file)?)?;
        if bytes.len() != n {
            return Err(Error::DimensionMismatch {
                file: entry.mask_file.clone(),
                expected: n,
                actual: bytes.len(),
            });
        }
        if let Some(index) = bytes.iter().position(|&b| b > 1) {
            return Err(Error::InvalidMaskByte {
                file: entry.mask_file.clone(),
                index,
                value: bytes[index],
            });
        }
        let occupancy = VoxelSet::from_fn(n, |i| bytes[i] == 1);
        structures.push(StructureMask::new(
            entry.name.clone(),
            entry.role,
            entry.color,
            grid,
            occupancy,
        )?);
    }

    let values = read_f32_file(dir, &manifest.dose.file, n)?;
    let dose = DoseGrid::new(grid, values).map_err(|e| relabel(e, &manifest.dose.file))?;
    let mut plan = PlanBundle::new(structures, dose, manifest.prescription_dose_gy)?;
    if let Some(bg) = &manifest.background {
        let values = read_f32_file(dir, &bg.file, n)?;
        check_background(&grid, &values, &bg.file)?;
        plan.background = Some(values);
    }
    plan.metadata = manifest.metadata;
    Ok(plan)
}

/// Attaches the real file name to value errors raised while building a grid.
fn relabel(err: Error, file: &str) -> Error {
    match err {
        Error::NonFiniteDose { index, .. } => Error::NonFiniteDose {
            file: file.into(),
            index,
        },
        Error::NegativeDose { index, value, .. } => Error::NegativeDose {
            file: file.into(),
            index,
            value,
        },
        other => other,
    }
}

fn bundle_path(dir: &Path, file: &str) -> Result<PathBuf> {
    let rel = Path::new(file);
    let plain = rel
        .components()
        .all(|c| matches!(c, std::path::Component::Normal(_)));
    if !plain || file.is_empty() {
        return Err(Error::Manifest(format!(
            "file reference {file:?} must be a relative path inside the bundle"
        )));
    }
    Ok(dir.join(rel))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

fn read_f32_file(dir: &Path, file: &str, n: usize) -> Result<Vec<f32>> {
    let bytes = read_file(&bundle_path(dir, file)?)?;
    if bytes.len() != n * 4 {
        return Err(Error::DimensionMismatch {
            file: file.into(),
            expected: n * 4,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
