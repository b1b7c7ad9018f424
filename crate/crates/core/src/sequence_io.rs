//! Frame loading, gray conversion, and MOT-style ground-truth files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// An RGB frame, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub index: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, index: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("frame size {width}x{height}")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "frame {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
            index,
        })
    }

    /// A frame filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3], index: usize) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Frame {
            width,
            height,
            pixels,
            index,
        }
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Normalized gray image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub index: usize,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, values: Vec<f64>, index: usize) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "gray frame {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("gray values must lie in [0, 1]".into()));
        }
        Ok(GrayFrame {
            width,
            height,
            values,
            index,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// BT.601 luma scaled to `[0, 1]`.
pub fn to_gray_normalized(f: &Frame) -> GrayFrame {
    let values = f
        .pixels
        .chunks_exact(3)
        .map(|p| {
            let v = (LUMA_R * p[0] as f64 + LUMA_G * p[1] as f64 + LUMA_B * p[2] as f64) / 255.0;
            v.clamp(0.0, 1.0)
        })
        .collect();
    GrayFrame {
        width: f.width,
        height: f.height,
        values,
        index: f.index,
    }
}

/// An ordered, lazily decoded image sequence.
///
/// File discovery and ordering happen up front; decoding and the dimension
/// check happen as frames are pulled.
#[derive(Debug)]
pub struct Sequence {
    paths: Vec<PathBuf>,
    next: usize,
    dims: Option<(usize, usize)>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }

    /// Decode every remaining frame, stopping at the first error.
    pub fn collect_frames(self) -> Result<Vec<Frame>> {
        self.collect()
    }
}

impl Iterator for Sequence {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        let path = self.paths.get(self.next)?;
        let index = self.next;
        self.next += 1;
        let frame = read_image(path, index).and_then(|f| match self.dims {
            Some((w, h)) if (w, h) != (f.width, f.height) => Err(Error::FrameSizeMismatch {
                path: path.clone(),
                expected_w: w,
                expected_h: h,
                found_w: f.width,
                found_h: f.height,
            }),
            _ => {
                self.dims = Some((f.width, f.height));
                Ok(f)
            }
        });
        Some(frame)
    }
}

fn is_supported_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm"))
        .unwrap_or(false)
}

/// List the frames of `dir` in lexicographic filename order.
///
/// With no `pattern`, every `.png` / `.ppm` file is taken; otherwise the
/// filename must match the glob.
pub fn load_sequence(dir: &Path, pattern: Option<&str>) -> Result<Sequence> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory {
            path: dir.to_path_buf(),
        });
    }
    let matcher = pattern
        .map(glob::Pattern::new)
        .transpose()
        .map_err(|e| Error::InvalidArgument(format!("bad filename pattern: {e}")))?;

    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let keep = match &matcher {
            Some(m) => m.matches(&name),
            None => is_supported_image(&path),
        };
        if keep {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    match paths.len() {
        0 => Err(Error::NoFrames {
            path: dir.to_path_buf(),
        }),
        1 => Err(Error::SingleFrame {
            path: dir.to_path_buf(),
        }),
        _ => Ok(Sequence {
            paths,
            next: 0,
            dims: None,
        }),
    }
}

/// Decode a PNG or binary PPM file.
pub fn read_image(path: &Path, index: usize) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P6") {
        return decode_ppm(&bytes, index).map_err(|message| Error::Decode {
            path: path.to_path_buf(),
            message,
        });
    }
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(Frame {
        width: w as usize,
        height: h as usize,
        pixels: rgb.into_raw(),
        index,
    })
}

fn decode_ppm(bytes: &[u8], index: usize) -> std::result::Result<Frame, String> {
    // Header: magic, width, height, maxval, each separated by whitespace,
    // with `#` comments allowed, then exactly one whitespace byte.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("malformed header")?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("malformed header".into());
    }
    pos += 1;
    let len = width * height * 3;
    let data = bytes.get(pos..pos + len).ok_or("truncated pixel data")?;
    Ok(Frame {
        width,
        height,
        pixels: data.to_vec(),
        index,
    })
}

pub fn encode_ppm(f: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", f.width, f.height).into_bytes();
    out.extend_from_slice(&f.pixels);
    out
}

pub fn write_ppm(path: &Path, f: &Frame) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_ppm(f)).map_err(|e| Error::io(path, e))
}

/// One annotated object in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub id: u64,
    pub bbox: BoundingBox,
}

/// Ground truth keyed by 0-based frame index.
pub type GroundTruth = BTreeMap<usize, Vec<Annotation>>;

fn parse_integral(s: &str) -> Option<i64> {
    let v: f64 = s.trim().parse().ok()?;
    (v.fract() == 0.0 && v.is_finite()).then_some(v as i64)
}

/// Parse `frame,id,x,y,w,h[,...]` lines. Frame numbers in the file are
/// 1-based; the returned map is 0-based. Blank lines are skipped.
pub fn parse_mot_str(text: &str, path: &Path) -> Result<GroundTruth> {
    let mut gt = GroundTruth::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 6 {
            return Err(err(format!("expected at least 6 fields, found {}", cols.len())));
        }
        let frame = parse_integral(cols[0]).ok_or_else(|| err(format!("bad frame number `{}`", cols[0])))?;
        if frame < 1 {
            return Err(err(format!("frame numbers start at 1, found {frame}")));
        }
        let id = parse_integral(cols[1])
            .filter(|v| *v >= 0)
            .ok_or_else(|| err(format!("bad id `{}`", cols[1])))?;
        let mut xywh = [0.0; 4];
        for (slot, col) in xywh.iter_mut().zip(&cols[2..6]) {
            *slot = col
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad number `{col}`")))?;
        }
        let bbox = BoundingBox::new(xywh[0], xywh[1], xywh[2], xywh[3]);
        if !bbox.is_valid() {
            return Err(err("box width and height must be positive".into()));
        }
        gt.entry(frame as usize - 1).or_default().push(Annotation { id: id as u64, bbox });
    }
    Ok(gt)
}

pub fn parse_mot_ground_truth(path: &Path) -> Result<GroundTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mot_str(&text, path)
}

/// Serialize in the same 1-based `frame,id,x,y,w,h` layout that
/// [`parse_mot_str`] reads.
pub fn format_mot(gt: &GroundTruth) -> String {
    let mut out = String::new();
    for (frame, anns) in gt {
        for a in anns {
            let b = a.bbox;
            let _ = writeln!(out, "{},{},{},{},{},{}", frame + 1, a.id, b.x, b.y, b.w, b.h);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_of_black_white_and_red() {
        let black = to_gray_normalized(&Frame::filled(4, 3, [0, 0, 0], 0));
        assert!(black.values.iter().all(|&v| v == 0.0));
        let white = to_gray_normalized(&Frame::filled(4, 3, [255, 255, 255], 0));
        assert!(white.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let red = to_gray_normalized(&Frame::filled(1, 1, [255, 0, 0], 0));
        assert!((red.values[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn gray_equal_rgb_maps_to_v_over_255() {
        for v in [0u8, 1, 77, 128, 254, 255] {
            let g = to_gray_normalized(&Frame::filled(1, 1, [v, v, v], 0));
            assert!((g.values[0] - v as f64 / 255.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_rejects_wrong_buffer_length() {
        assert!(Frame::new(2, 2, vec![0; 11], 0).is_err());
        assert!(Frame::new(0, 2, vec![], 0).is_err());
    }

    #[test]
    fn ppm_roundtrip_with_comment() {
        let mut f = Frame::filled(3, 2, [10, 20, 30], 0);
        f.set_rgb(2, 1, [1, 2, 3]);
        let bytes = encode_ppm(&f);
        assert_eq!(decode_ppm(&bytes, 0).unwrap(), f);

        let mut commented = b"P6\n# made by hand\n3 2\n255\n".to_vec();
        commented.extend_from_slice(&f.pixels);
        assert_eq!(decode_ppm(&commented, 0).unwrap(), f);
    }

    #[test]
    fn ppm_rejects_truncated_and_16bit() {
        assert!(decode_ppm(b"P6\n3 2\n255\n\x00\x01", 0).is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00", 0).is_err());
    }

    #[test]
    fn mot_single_record() {
        let gt = parse_mot_str("1,1,10,20,30,40\n", Path::new("gt.txt")).unwrap();
        assert_eq!(gt.len(), 1);
        assert_eq!(
            gt[&0],
            vec![Annotation {
                id: 1,
                bbox: BoundingBox::new(10.0, 20.0, 30.0, 40.0)
            }]
        );
    }

    #[test]
    fn mot_empty_and_extra_columns() {
        assert!(parse_mot_str("", Path::new("gt.txt")).unwrap().is_empty());
        let gt = parse_mot_str("3,7,1,2,3,4,1,-1,-1,-1\n", Path::new("gt.txt")).unwrap();
        assert_eq!(gt[&2][0].id, 7);
    }

    #[test]
    fn mot_short_line_reports_line_number() {
        let err = parse_mot_str("1,1,10,20\n", Path::new("gt.txt")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_mot_str("1,1,1,1,1,1\n\n2,1,x,1,1,1\n", Path::new("gt.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn mot_roundtrip_is_a_fixpoint() {
        let text = "1,1,10,20,30,40\n1,2,5.5,6,7,8\n4,1,0,0,1,1\n";
        let gt = parse_mot_str(text, Path::new("gt.txt")).unwrap();
        let again = format_mot(&gt);
        assert_eq!(again, text);
        assert_eq!(parse_mot_str(&again, Path::new("gt.txt")).unwrap(), gt);
    }
}
