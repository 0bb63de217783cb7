//! On-disk dataset layout.
//!
//! ```text
//! <root>/manifest.tsv                       path  label  subject
//! <root>/classes.txt                        one class name per line, label order
//! <root>/<class>/<sample>/frame_0000.png    8-bit grey or RGB
//! <root>/<class>/<sample>/keypoints.kp      optional
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::ColorType;

use super::transforms::{resize_normalize, RawFrame};
use super::{default_class_names, Dataset, DatasetManifest, GestureSample, Provenance, SampleDescriptor};
use crate::error::{Error, Result};
use crate::featurestreams::{load_keypoints, save_keypoints, FrameGeometry};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const CLASSES_FILE: &str = "classes.txt";
pub const KEYPOINT_FILE: &str = "keypoints.kp";
const MANIFEST_HEADER: &str = "path\tlabel\tsubject";

/// Directory name for a class: lowercase, non-alphanumerics replaced by `_`.
pub fn class_dir_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("frame_{t:04}.png"))
}

/// Writes frames (rounded to 8 bits) and keypoints of one sample into `dir`.
pub fn write_sample_dir(sample: &GestureSample, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let g = sample.geometry();
    let color = match g.channels {
        1 => ColorType::L8,
        3 => ColorType::Rgb8,
        c => return Err(Error::Config(format!("cannot store {c}-channel frames as PNG"))),
    };
    for t in 0..sample.len() {
        let bytes: Vec<u8> = sample.frames.row(t).iter().map(|v| (v * 255.0).round() as u8).collect();
        let path = frame_path(dir, t);
        image::save_buffer(&path, &bytes, g.width as u32, g.height as u32, color).map_err(|e| Error::Image {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    }
    if let Some(kp) = &sample.keypoints {
        save_keypoints(dir.join(KEYPOINT_FILE), kp)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every sample under `root` and returns the manifest that was written.
pub fn write_dataset(ds: &Dataset, root: &Path) -> Result<DatasetManifest> {
    create_dir(root)?;
    let mut entries = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let rel = PathBuf::from(class_dir_name(&ds.class_names[s.label])).join(&s.id);
        write_sample_dir(s, &root.join(&rel))?;
        entries.push(SampleDescriptor {
            path: rel,
            label: s.label,
            subject: s.subject.clone(),
        });
    }
    let manifest = DatasetManifest {
        class_names: ds.class_names.clone(),
        entries,
    };
    let mut text = format!("{MANIFEST_HEADER}\n");
    for e in &manifest.entries {
        let path = e.path.to_string_lossy().replace('\\', "/");
        writeln!(text, "{path}\t{}\t{}", e.label, e.subject).expect("write to string");
    }
    write_text(&root.join(MANIFEST_FILE), &text)?;
    let mut classes = ds.class_names.join("\n");
    classes.push('\n');
    write_text(&root.join(CLASSES_FILE), &classes)?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let classes_path = root.join(CLASSES_FILE);
    let class_names = if classes_path.exists() {
        fs::read_to_string(&classes_path)
            .map_err(|e| Error::io(&classes_path, e))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect()
    } else {
        default_class_names()
    };
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
        return Err(Error::format("manifest", format!("first line must be {MANIFEST_HEADER:?}")));
    }
    let mut entries = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::format("manifest", format!("row {n}: expected 3 tab-separated columns")));
        }
        let label = cols[1]
            .trim()
            .parse()
            .map_err(|_| Error::format("manifest", format!("row {n}: bad label {:?}", cols[1])))?;
        entries.push(SampleDescriptor {
            path: PathBuf::from(cols[0].trim()),
            label,
            subject: cols[2].trim().to_string(),
        });
    }
    let manifest = DatasetManifest { class_names, entries };
    manifest.validate()?;
    Ok(manifest)
}

fn decode_frame(path: &Path, channels: usize) -> Result<RawFrame> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = if channels == 1 {
        img.to_luma8().into_raw()
    } else {
        img.to_rgb8().into_raw()
    };
    RawFrame::new(w, h, channels, data)
}

/// Loads `frame_*.png` (sorted by name) and the optional keypoint file from one sample directory.
pub fn load_sample_dir(dir: &Path, geometry: FrameGeometry, label: usize, subject: &str) -> Result<GestureSample> {
    let mut pngs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".png"))
        })
        .collect();
    pngs.sort();
    if pngs.is_empty() {
        return Err(Error::Dataset(format!("no frame_*.png files in {}", dir.display())));
    }
    let raw = pngs
        .iter()
        .map(|p| decode_frame(p, geometry.channels))
        .collect::<Result<Vec<_>>>()?;
    let frames = resize_normalize(&raw, geometry)?;
    let kp_path = dir.join(KEYPOINT_FILE);
    let keypoints = if kp_path.exists() { Some(load_keypoints(&kp_path)?) } else { None };
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    GestureSample::new(id, frames, keypoints, label, subject, Provenance::Original)
}

/// Loads every sample listed in `<root>/manifest.tsv`, resizing frames to `geometry`.
pub fn load_dataset(root: &Path, geometry: FrameGeometry) -> Result<Dataset> {
    let manifest = read_manifest(root)?;
    let samples = manifest
        .entries
        .iter()
        .map(|e| {
            let mut s = load_sample_dir(&root.join(&e.path), geometry, e.label, &e.subject)?;
            // ids must be unique across classes
            s.id = e.path.to_string_lossy().replace('\\', "/");
            s.lineage = s.id.clone();
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(manifest.class_names, samples)
}
