//! File formats: PLY point clouds, 8-bit RGB and 16-bit depth PNGs,
//! intrinsics JSON and per-view debug dumps.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ColoredPointCloud, RgbdFrame};
use crate::grid::{ColorImage, DepthMap, Grid, Mask};
use crate::net::{color_to_rgb_image, mask_to_gray, rgb_image_to_color};

pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Writes binary little-endian PLY with float32 xyz and uint8 rgb.
pub fn write_ply(path: &Path, cloud: &ColoredPointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply_to(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

pub fn write_ply_to(w: &mut impl Write, cloud: &ColoredPointCloud) -> Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )?;
    let mut buf = Vec::with_capacity(cloud.len() * 15);
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        for v in p.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        buf.extend_from_slice(c);
    }
    w.write_all(&buf)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8], big_endian: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&b[..$n]);
                (if big_endian {
                    <$t>::from_be_bytes(a)
                } else {
                    <$t>::from_le_bytes(a)
                }) as f64
            }};
        }
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => num!(i16, 2),
            Self::U16 => num!(u16, 2),
            Self::I32 => num!(i32, 4),
            Self::U32 => num!(u32, 4),
            Self::F32 => num!(f32, 4),
            Self::F64 => num!(f64, 8),
        }
    }
}

enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

/// Reads the `vertex` element of an ASCII or binary PLY file. Colors
/// default to black when the file has none.
pub fn read_ply(path: &Path) -> Result<ColoredPointCloud> {
    let file = File::open(path).map_err(|e| format_err(path, e.to_string()))?;
    read_ply_from(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Format { reason, .. } => format_err(path, reason),
        other => other,
    })
}

pub fn read_ply_from(r: &mut impl BufRead) -> Result<ColoredPointCloud> {
    let bad = |reason: &str| Error::Format {
        path: "<stream>".into(),
        reason: reason.into(),
    };
    let mut line = String::new();
    let next_line = |r: &mut dyn BufRead, line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(bad("unexpected end of header"));
        }
        Ok(())
    };
    next_line(r, &mut line)?;
    if line.trim() != "ply" {
        return Err(bad("missing ply magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(r, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", f, _] => {
                encoding = Some(match *f {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => Encoding::BinaryBe,
                    _ => return Err(bad("unknown format")),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, t, _] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element"))?;
                let c = Scalar::parse(c).ok_or_else(|| bad("bad list count type"))?;
                let t = Scalar::parse(t).ok_or_else(|| bad("bad list item type"))?;
                el.props.push(Property::List(c, t));
            }
            ["property", t, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element"))?;
                let t = Scalar::parse(t).ok_or_else(|| bad("bad property type"))?;
                el.props.push(Property::Scalar(name.to_string(), t));
            }
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(bad("unrecognized header line")),
        }
    }
    let encoding = encoding.ok_or_else(|| bad("missing format line"))?;
    let mut cloud = ColoredPointCloud::default();
    let mut ascii_tokens: Vec<String> = Vec::new();
    let mut ascii_pos = 0usize;
    if encoding == Encoding::Ascii {
        let mut rest = String::new();
        r.read_to_string(&mut rest)?;
        ascii_tokens = rest.split_whitespace().map(str::to_string).collect();
    }
    let big = encoding == Encoding::BinaryBe;
    let mut read_value = |r: &mut dyn BufRead, t: Scalar| -> Result<f64> {
        if encoding == Encoding::Ascii {
            let tok = ascii_tokens
                .get(ascii_pos)
                .ok_or_else(|| bad("truncated body"))?;
            ascii_pos += 1;
            tok.parse::<f64>().map_err(|_| bad("bad ascii number"))
        } else {
            let mut b = [0u8; 8];
            r.read_exact(&mut b[..t.size()])
                .map_err(|_| bad("truncated body"))?;
            Ok(t.read(&b, big))
        }
    };
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let idx = |n: &str| {
            el.props
                .iter()
                .position(|p| matches!(p, Property::Scalar(name, _) if name == n))
        };
        let (ix, iy, iz) = (idx("x"), idx("y"), idx("z"));
        let (ir, ig, ib) = (idx("red"), idx("green"), idx("blue"));
        if is_vertex && (ix.is_none() || iy.is_none() || iz.is_none()) {
            return Err(bad("vertex element lacks x/y/z"));
        }
        let mut vals = vec![0.0; el.props.len()];
        for _ in 0..el.count {
            for (k, p) in el.props.iter().enumerate() {
                match p {
                    Property::Scalar(_, t) => vals[k] = read_value(r, *t)?,
                    Property::List(c, t) => {
                        let n = read_value(r, *c)? as usize;
                        for _ in 0..n {
                            read_value(r, *t)?;
                        }
                    }
                }
            }
            if is_vertex {
                let p = Vector3::new(vals[ix.unwrap()], vals[iy.unwrap()], vals[iz.unwrap()]);
                let ch = |i: Option<usize>| i.map_or(0, |i| vals[i].clamp(0.0, 255.0) as u8);
                cloud.push(p, [ch(ir), ch(ig), ch(ib)]);
            }
        }
    }
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err(bad("no vertex element"));
    }
    Ok(cloud)
}

/// Camera intrinsics plus the depth PNG scale, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
}

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

impl IntrinsicsFile {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    pub fn from_intrinsics(k: &CameraIntrinsics, depth_scale: f64) -> Self {
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            depth_scale,
        }
    }
}

pub fn read_intrinsics(path: &Path) -> Result<IntrinsicsFile> {
    let text = fs::read_to_string(path).map_err(|e| format_err(path, e.to_string()))?;
    let file: IntrinsicsFile =
        serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))?;
    if !(file.depth_scale > 0.0 && file.depth_scale.is_finite()) {
        return Err(format_err(path, "depth_scale must be positive"));
    }
    file.intrinsics()
        .map_err(|e| format_err(path, e.to_string()))?;
    Ok(file)
}

pub fn write_intrinsics(path: &Path, file: &IntrinsicsFile) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(file)?)?;
    Ok(())
}

pub fn read_rgb_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path).map_err(|e| format_err(path, e.to_string()))?;
    Ok(rgb_image_to_color(&img.to_rgb8()))
}

pub fn write_rgb_png(path: &Path, img: &ColorImage) -> Result<()> {
    color_to_rgb_image(img).save(path)?;
    Ok(())
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    mask_to_gray(mask).save(path)?;
    Ok(())
}

/// Reads a single-channel 16-bit depth PNG; `value × depth_scale` is meters
/// and 0 means missing.
pub fn read_depth_png(path: &Path, depth_scale: f64) -> Result<DepthMap> {
    let img = image::open(path).map_err(|e| format_err(path, e.to_string()))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(b) => b,
        other => {
            return Err(format_err(
                path,
                format!(
                    "expected 16-bit single-channel depth, got {:?}",
                    other.color()
                ),
            ))
        }
    };
    let (w, h) = img.dimensions();
    Ok(Grid::from_fn(w as usize, h as usize, |x, y| {
        img.get_pixel(x as u32, y as u32).0[0] as f64 * depth_scale
    }))
}

/// Quantizes to `round(meters / depth_scale)`, saturating at 65535. Missing
/// or non-positive depth is written as 0.
pub fn write_depth_png(path: &Path, depth: &DepthMap, depth_scale: f64) -> Result<()> {
    let (w, h) = depth.dims();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let d = *depth.get(x as usize, y as usize);
        let v = if d.is_finite() && d > 0.0 {
            (d / depth_scale).round().clamp(1.0, u16::MAX as f64) as u16
        } else {
            0
        };
        Luma([v])
    });
    img.save(path)?;
    Ok(())
}

/// Paths of one RGB-D frame on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInput {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub intrinsics: PathBuf,
}

impl SceneInput {
    pub fn load(&self) -> Result<RgbdFrame> {
        let intr = read_intrinsics(&self.intrinsics)?;
        let k = intr.intrinsics()?;
        let rgb = read_rgb_png(&self.rgb)?;
        let depth = read_depth_png(&self.depth, intr.depth_scale)?;
        if rgb.dims() != (k.width, k.height) || depth.dims() != (k.width, k.height) {
            return Err(Error::ShapeMismatch(format!(
                "rgb {:?}, depth {:?}, intrinsics {}x{}",
                rgb.dims(),
                depth.dims(),
                k.width,
                k.height
            )));
        }
        RgbdFrame::new(rgb, depth, k)
    }

    /// Writes `frame` as `rgb.png`, `depth.png` and `intrinsics.json` under `dir`.
    pub fn save(dir: &Path, frame: &RgbdFrame, depth_scale: f64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let input = Self {
            rgb: dir.join("rgb.png"),
            depth: dir.join("depth.png"),
            intrinsics: dir.join("intrinsics.json"),
        };
        write_rgb_png(&input.rgb, &frame.rgb)?;
        write_depth_png(&input.depth, &frame.depth, depth_scale)?;
        write_intrinsics(
            &input.intrinsics,
            &IntrinsicsFile::from_intrinsics(&frame.intrinsics, depth_scale),
        )?;
        Ok(input)
    }
}
