//! On-disk dataset directories: `manifest.csv` + `images/` + `targets/`.
//!
//! The manifest has the header `path,split,label`. For classification the
//! label is a class name; for edge-map datasets it is the relative path of
//! the target PGM. Class ids follow the order of first appearance.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::netpbm::{self, Image8};
use super::{Dataset, Item, Split, Target, Task};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.csv";

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn to_image8(t: &Tensor) -> Image8 {
    let s = t.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let plane = h * w;
    let mut pixels = Vec::with_capacity(c * plane);
    for i in 0..plane {
        for ch in 0..c {
            pixels.push(quantize(t.data()[ch * plane + i]));
        }
    }
    Image8 { width: w, height: h, channels: c, pixels }
}

fn from_image8(img: &Image8, channels: usize) -> Tensor {
    let plane = img.width * img.height;
    let mut data = vec![0.0; channels * plane];
    for i in 0..plane {
        for ch in 0..channels {
            let src = if img.channels == 1 { 0 } else { ch.min(img.channels - 1) };
            let v = if channels == 1 && img.channels == 3 {
                let p = &img.pixels[i * 3..i * 3 + 3];
                (f32::from(p[0]) + f32::from(p[1]) + f32::from(p[2])) / 3.0
            } else {
                f32::from(img.pixels[i * img.channels + src])
            };
            data[ch * plane + i] = v / 255.0;
        }
    }
    Tensor::new(vec![channels, img.height, img.width], data).expect("image shape")
}

/// Incremental writer, so large generated corpora never sit in memory.
pub struct DatasetWriter {
    root: PathBuf,
    manifest: csv::Writer<fs::File>,
    task: Task,
    class_names: Vec<String>,
    next: usize,
}

impl DatasetWriter {
    pub fn create(root: &Path, task: Task, class_names: Vec<String>) -> Result<Self> {
        fs::create_dir_all(root.join("images"))?;
        if task == Task::EdgeMap {
            fs::create_dir_all(root.join("targets"))?;
        }
        let mut manifest = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(root.join(MANIFEST))
            .map_err(csv_io)?;
        manifest.write_record(["path", "split", "label"]).map_err(csv_io)?;
        Ok(Self { root: root.to_path_buf(), manifest, task, class_names, next: 0 })
    }

    pub fn push(&mut self, item: &Item) -> Result<()> {
        let stem = format!("{:06}", self.next);
        let image_rel = format!("images/{stem}.ppm");
        netpbm::write(&self.root.join(&image_rel), &to_image8(&item.input))?;
        let label = match (&item.target, self.task) {
            (Target::Map(map), Task::EdgeMap) => {
                let rel = format!("targets/{stem}.pgm");
                netpbm::write(&self.root.join(&rel), &to_image8(map))?;
                rel
            }
            (Target::Class(c), Task::Classification) => self
                .class_names
                .get(*c)
                .cloned()
                .ok_or(Error::LabelOutOfRange { label: *c, classes: self.class_names.len() })?,
            _ => return Err(Error::InvalidDataset("target does not match the dataset task".into())),
        };
        self.manifest.write_record([image_rel.as_str(), item.split.name(), label.as_str()]).map_err(csv_io)?;
        self.next += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.manifest.flush()?;
        Ok(self.next)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes a whole dataset; values are quantized to 8 bits.
pub fn write_dataset(dataset: &Dataset, root: &Path) -> Result<()> {
    let mut w = DatasetWriter::create(root, dataset.task, dataset.class_names.clone())?;
    for item in &dataset.items {
        w.push(item)?;
    }
    w.finish()?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Output `(H, W)`; defaults to the size of the first image.
    pub resolution: Option<(usize, usize)>,
    /// Manifest path; defaults to `<root>/manifest.csv`.
    pub manifest: Option<PathBuf>,
    /// Task; inferred when absent (labels naming existing image files mean edge maps).
    pub task: Option<Task>,
}

fn read_image(path: &Path) -> Result<Image8> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return netpbm::decode(&bytes);
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes);
    }
    Err(Error::UnsupportedFormat(path.display().to_string()))
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<Image8> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let bad = |e: png::DecodingError| Error::UnsupportedFormat(format!("png: {e}"));
    let mut reader = decoder.read_info().map_err(bad)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    let (width, height) = (info.width as usize, info.height as usize);
    let src = info.color_type.samples();
    let buf = &buf[..info.buffer_size()];
    let (channels, pixels) = match src {
        1 => (1, buf.to_vec()),
        2 => (1, buf.chunks(2).map(|p| p[0]).collect()),
        3 => (3, buf.to_vec()),
        _ => (3, buf.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect()),
    };
    Ok(Image8 { width, height, channels, pixels })
}

#[cfg(not(feature = "png"))]
fn decode_png(_: &[u8]) -> Result<Image8> {
    Err(Error::UnsupportedFormat("PNG support is not compiled in (enable the `png` feature)".into()))
}

fn is_image_path(label: &str) -> bool {
    let lower = label.to_ascii_lowercase();
    [".pgm", ".ppm", ".png"].iter().any(|ext| lower.ends_with(ext))
}

/// Bilinear resize of a `C×H×W` tensor with half-pixel centres and edge clamping.
pub fn resize_bilinear(t: &Tensor, (out_h, out_w): (usize, usize)) -> Tensor {
    let s = t.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    if (h, w) == (out_h, out_w) {
        return t.clone();
    }
    let d = t.data();
    let coord = |o: usize, out: usize, inp: usize| -> (usize, usize, f32) {
        let x = ((o as f32 + 0.5) * inp as f32 / out as f32 - 0.5).clamp(0.0, (inp - 1) as f32);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(inp - 1);
        (x0, x1, x - x0 as f32)
    };
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..out_h {
            let (y0, y1, fy) = coord(oy, out_h, h);
            for ox in 0..out_w {
                let (x0, x1, fx) = coord(ox, out_w, w);
                let top = d[base + y0 * w + x0] * (1.0 - fx) + d[base + y0 * w + x1] * fx;
                let bottom = d[base + y1 * w + x0] * (1.0 - fx) + d[base + y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out).expect("resized shape")
}

/// Loads a dataset directory described by a manifest.
pub fn load_image_folder(root: &Path, options: &LoadOptions) -> Result<Dataset> {
    let manifest_path = options.manifest.clone().unwrap_or_else(|| root.join(MANIFEST));
    if !manifest_path.exists() {
        return Err(Error::MissingFile(manifest_path));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(&manifest_path).map_err(csv_io)?;
    let header = reader.headers().map_err(|e| Error::BadManifestRow { line: 1, reason: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != ["path", "split", "label"] {
        return Err(Error::BadManifestRow { line: 1, reason: "header must be `path,split,label`".into() });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::BadManifestRow { line, reason: e.to_string() })?;
        if record.len() != 3 {
            return Err(Error::BadManifestRow { line, reason: format!("expected 3 fields, found {}", record.len()) });
        }
        let split = Split::parse(&record[1])
            .ok_or_else(|| Error::BadManifestRow { line, reason: format!("unknown split `{}`", &record[1]) })?;
        if record[0].is_empty() || record[2].is_empty() {
            return Err(Error::BadManifestRow { line, reason: "empty path or label".into() });
        }
        rows.push((line, record[0].to_string(), split, record[2].to_string()));
    }
    if rows.is_empty() {
        return Err(Error::BadManifestRow { line: 0, reason: "manifest has no rows".into() });
    }
    let task = options.task.unwrap_or_else(|| {
        if rows.iter().all(|(_, _, _, label)| is_image_path(label) && root.join(label).exists()) {
            Task::EdgeMap
        } else {
            Task::Classification
        }
    });

    let mut class_names: Vec<String> = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut resolution = options.resolution;
    let mut items = Vec::with_capacity(rows.len());
    for (line, path, split, label) in rows {
        let image = read_image(&root.join(&path))?;
        let res = *resolution.get_or_insert((image.height, image.width));
        let input = resize_bilinear(&from_image8(&image, 3), res);
        let target = match task {
            Task::Classification => {
                let next = class_names.len();
                let id = *class_ids.entry(label.clone()).or_insert_with(|| {
                    class_names.push(label.clone());
                    next
                });
                Target::Class(id)
            }
            Task::EdgeMap => {
                if !is_image_path(&label) {
                    return Err(Error::BadManifestRow {
                        line,
                        reason: format!("`{label}` is not a target image path"),
                    });
                }
                let map = resize_bilinear(&from_image8(&read_image(&root.join(&label))?, 1), res);
                Target::Map(map.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }))
            }
        };
        items.push(Item { input, target, split });
    }
    let resolution = resolution.expect("at least one row");
    Ok(Dataset { items, task, class_names, resolution, seed: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_edge_dataset, gen_shape_dataset, EdgeSceneConfig};

    #[test]
    fn classification_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_shape_dataset(2, (16, 16), 1, 0.5).unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = load_image_folder(dir.path(), &LoadOptions::default()).unwrap();
        assert_eq!(back.task, Task::Classification);
        assert_eq!(back.class_names, ds.class_names);
        assert_eq!(back.len(), ds.len());
        for (a, b) in ds.items.iter().zip(&back.items) {
            assert_eq!(a.target, b.target);
            assert_eq!(a.split, b.split);
            for (x, y) in a.input.data().iter().zip(b.input.data()) {
                assert!((x - y).abs() <= 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn edge_round_trip_is_exact_for_binary_targets() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_edge_dataset(3, (16, 16), 2, EdgeSceneConfig::default(), 0.5).unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = load_image_folder(dir.path(), &LoadOptions::default()).unwrap();
        assert_eq!(back.task, Task::EdgeMap);
        for (a, b) in ds.items.iter().zip(&back.items) {
            assert_eq!(a.target, b.target);
        }
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST), "path,split,label\n").unwrap();
        assert!(matches!(
            load_image_folder(dir.path(), &LoadOptions::default()),
            Err(Error::BadManifestRow { line: 0, .. })
        ));
        fs::write(dir.path().join(MANIFEST), "path,split,label\nimages/a.ppm,val,cat\n").unwrap();
        assert!(matches!(
            load_image_folder(dir.path(), &LoadOptions::default()),
            Err(Error::BadManifestRow { line: 2, .. })
        ));
        fs::write(dir.path().join(MANIFEST), "path,split,label\nimages/a.ppm,train,cat\n").unwrap();
        assert!(matches!(load_image_folder(dir.path(), &LoadOptions::default()), Err(Error::MissingFile(_))));
        fs::create_dir_all(dir.path().join("images")).unwrap();
        fs::write(dir.path().join("images/a.ppm"), b"GIF89a").unwrap();
        assert!(matches!(load_image_folder(dir.path(), &LoadOptions::default()), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn resize_preserves_constants_and_identity() {
        let t = Tensor::full(&[3, 10, 14], 0.25);
        let r = resize_bilinear(&t, (7, 20));
        assert_eq!(r.shape(), &[3, 7, 20]);
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
        let g = Tensor::from_fn(&[1, 4, 4], |i| i as f32);
        assert!(resize_bilinear(&g, (4, 4)).bit_eq(&g));
        // 2x downsample averages each 2x2 block
        let down = resize_bilinear(&g, (2, 2));
        assert_eq!(down.data(), &[2.5, 4.5, 10.5, 12.5]);
    }
}
