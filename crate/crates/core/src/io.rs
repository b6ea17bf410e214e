//! PNG frame I/O and the plain-text sequence manifest.
//!
//! Manifest lines are `index depth_path [color_path]`, whitespace separated,
//! in strictly ascending index order. `#` starts a comment. Relative paths are
//! resolved against the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};
use crate::frame::{ColorFrame, DepthFrame};
use crate::sequence::FrameSequence;

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    reader.decode().map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })
}

fn describe(color: ColorType) -> String {
    format!(
        "{} channel(s) at {} bits per channel",
        color.channel_count(),
        color.bits_per_pixel() / u16::from(color.channel_count())
    )
}

/// Read a 16-bit single-channel PNG verbatim as millimeters.
pub fn load_depth_png(path: impl AsRef<Path>) -> Result<DepthFrame> {
    let path = path.as_ref();
    match decode(path)? {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            DepthFrame::new(w as usize, h as usize, buf.into_raw())
        }
        other => Err(Error::Format {
            path: path.to_owned(),
            message: format!(
                "expected a 16-bit single-channel depth image, found {}",
                describe(other.color())
            ),
        }),
    }
}

pub fn save_depth_png(frame: &DepthFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
        frame.width() as u32,
        frame.height() as u32,
        frame.data().to_vec(),
    )
    .expect("frame buffer length is checked at construction");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })
}

/// Read an 8-bit RGB PNG.
pub fn load_color_png(path: impl AsRef<Path>) -> Result<ColorFrame> {
    let path = path.as_ref();
    match decode(path)? {
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            ColorFrame::new(w as usize, h as usize, buf.into_raw())
        }
        other => Err(Error::Format {
            path: path.to_owned(),
            message: format!(
                "expected an 8-bit 3-channel color image, found {}",
                describe(other.color())
            ),
        }),
    }
}

pub fn save_color_png(frame: &ColorFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(
        frame.width() as u32,
        frame.height() as u32,
        frame.data().to_vec(),
    )
    .expect("frame buffer length is checked at construction");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })
}

/// Write a boolean mask as an 8-bit grayscale PNG (255 = true).
pub fn save_mask_png(width: usize, height: usize, mask: &[bool], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data = mask.iter().map(|&m| if m { 255u8 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(width as u32, height as u32, data).ok_or_else(|| {
            Error::invalid(format!("mask of {} entries is not {width}x{height}", mask.len()))
        })?;
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub index: u64,
    pub depth: PathBuf,
    pub color: Option<PathBuf>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_manifest(&text, path)
}

/// Parse manifest text; `origin` names the file for errors and anchors relative paths.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<Vec<ManifestEntry>> {
    let base = origin.parent().unwrap_or_else(|| Path::new(""));
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_owned()
        } else {
            base.join(p)
        }
    };
    let mut entries: Vec<ManifestEntry> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_owned(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(err(format!(
                "expected `index depth_path [color_path]`, got {} field(s)",
                fields.len()
            )));
        }
        let index: u64 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad frame index `{}`", fields[0])))?;
        if let Some(prev) = entries.last() {
            if index <= prev.index {
                return Err(err(format!(
                    "frame index {index} is not greater than previous index {}",
                    prev.index
                )));
            }
        }
        entries.push(ManifestEntry {
            index,
            depth: resolve(fields[1]),
            color: fields.get(2).map(|c| resolve(c)),
        });
    }
    Ok(entries)
}

/// Render a manifest; paths are written relative to `dir` when they live below it.
pub fn format_manifest(entries: &[ManifestEntry], dir: &Path, header: Option<&str>) -> String {
    // Paths outside `dir` are written absolute so they still resolve when the
    // manifest is read relative to its own directory.
    let rel = |p: &Path| match p.strip_prefix(dir) {
        Ok(r) => r.to_string_lossy().into_owned(),
        Err(_) => std::path::absolute(p).unwrap_or_else(|_| p.to_owned()).to_string_lossy().into_owned(),
    };
    let mut out = String::new();
    if let Some(h) = header {
        for line in h.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    for e in entries {
        let _ = write!(out, "{} {}", e.index, rel(&e.depth));
        if let Some(c) = &e.color {
            let _ = write!(out, " {}", rel(c));
        }
        out.push('\n');
    }
    out
}

pub fn write_manifest(
    entries: &[ManifestEntry],
    path: impl AsRef<Path>,
    header: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    fs::write(path, format_manifest(entries, dir, header)).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Load every frame referenced by a manifest.
pub fn load_sequence(manifest: impl AsRef<Path>, fps: f64) -> Result<(Vec<u64>, FrameSequence)> {
    let entries = read_manifest(manifest)?;
    let mut indices = Vec::with_capacity(entries.len());
    let mut frames = Vec::with_capacity(entries.len());
    for e in entries {
        let depth = load_depth_png(&e.depth)?;
        let color = e.color.as_ref().map(load_color_png).transpose()?;
        indices.push(e.index);
        frames.push((depth, color));
    }
    Ok((indices, FrameSequence::new(frames, fps)?))
}
