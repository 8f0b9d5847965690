//! Depth and height image codecs: 16-bit PGM (millimetres), PFM (metres),
//! CSV (metres), plus binary PPM for overlays.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, PixelMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Pfm,
    Csv,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<ImageFormat> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "pgm" => Ok(ImageFormat::Pgm),
            "pfm" => Ok(ImageFormat::Pfm),
            "csv" => Ok(ImageFormat::Csv),
            _ => Err(Error::Format(format!("unrecognised extension on {}", path.display()))),
        }
    }
}

/// A grid of samples with `None` for missing values.
pub type Samples = Grid<Option<f64>>;

/// Whitespace-separated header tokens; `#` comments run to end of line.
fn header_tokens(data: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = vec![];
    let mut i = 0;
    while tokens.len() < count {
        while i < data.len() && data[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < data.len() && data[i] == b'#' {
            while i < data.len() && data[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < data.len() && !data[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Format("truncated header".into()));
        }
        tokens.push(String::from_utf8_lossy(&data[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    if i >= data.len() || !data[i].is_ascii_whitespace() {
        return Err(Error::Format("header not followed by whitespace".into()));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(s: &str, what: &str) -> Result<usize> {
    let v: usize = s.parse().map_err(|_| Error::Format(format!("bad {what} `{s}`")))?;
    if v == 0 {
        return Err(Error::Format(format!("{what} must be positive")));
    }
    Ok(v)
}

/// Binary PGM (`P5`) with 8- or 16-bit samples; 16-bit is big-endian.
pub fn decode_pgm(data: &[u8]) -> Result<Grid<u16>> {
    let (t, off) = header_tokens(data, 4)?;
    if t[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found `{}`", t[0])));
    }
    let (w, h) = (parse_dim(&t[1], "width")?, parse_dim(&t[2], "height")?);
    let maxval: u32 = t[3].parse().map_err(|_| Error::Format(format!("bad maxval `{}`", t[3])))?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    let bytes = if maxval < 256 { 1 } else { 2 };
    let body = &data[off..];
    if body.len() < w * h * bytes {
        return Err(Error::Format(format!("raster has {} bytes, need {}", body.len(), w * h * bytes)));
    }
    let v = if bytes == 1 {
        body[..w * h].iter().map(|&b| b as u16).collect()
    } else {
        body[..2 * w * h].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    Grid::from_vec(w, h, v)
}

pub fn encode_pgm16(g: &Grid<u16>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", g.width(), g.height()).into_bytes();
    for v in g.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn encode_pgm8(g: &Grid<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", g.width(), g.height()).into_bytes();
    out.extend_from_slice(g.data());
    out
}

/// Millimetre samples to metres; zero marks a missing reading when
/// `zero_is_missing`.
pub fn pgm_to_metres(g: &Grid<u16>, zero_is_missing: bool) -> Samples {
    g.map(|&v| if zero_is_missing && v == 0 { None } else { Some(v as f64 * 1e-3) })
}

/// Metres to whole millimetres; out-of-range or missing values are errors.
pub fn metres_to_pgm(s: &Samples) -> Result<Grid<u16>> {
    let mut out = Grid::new(s.width(), s.height(), 0u16)?;
    for (o, v) in out.data_mut().iter_mut().zip(s.data()) {
        let mm = v.ok_or_else(|| Error::Format("missing sample has no PGM encoding".into()))? * 1e3;
        let r = mm.round();
        if !(0.0..=65535.0).contains(&r) {
            return Err(Error::Format(format!("{mm} mm outside the 16-bit range")));
        }
        *o = r as u16;
    }
    Ok(out)
}

/// Greyscale PFM (`Pf`). Rows are stored bottom to top; a negative scale
/// means little-endian. Non-finite samples are missing.
pub fn decode_pfm(data: &[u8]) -> Result<Samples> {
    let (t, off) = header_tokens(data, 4)?;
    match t[0].as_str() {
        "Pf" => {}
        "PF" => return Err(Error::Format("colour PFM is not supported".into())),
        m => return Err(Error::Format(format!("expected Pf magic, found `{m}`"))),
    }
    let (w, h) = (parse_dim(&t[1], "width")?, parse_dim(&t[2], "height")?);
    let scale: f64 = t[3].parse().map_err(|_| Error::Format(format!("bad scale `{}`", t[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format("PFM scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let body = &data[off..];
    if body.len() < 4 * w * h {
        return Err(Error::Format(format!("raster has {} bytes, need {}", body.len(), 4 * w * h)));
    }
    let mut v = vec![None; w * h];
    for (k, c) in body[..4 * w * h].chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let f = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (h - 1 - k / w, k % w);
        v[row * w + col] = f.is_finite().then_some(f as f64);
    }
    Grid::from_vec(w, h, v)
}

pub fn encode_pfm(s: &Samples) -> Vec<u8> {
    let (w, h) = (s.width(), s.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for row in (0..h).rev() {
        for col in 0..w {
            let f = s.get(col, row).map_or(f32::NAN, |v| v as f32);
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    out
}

/// Row-major metres, comma separated. Empty fields and `nan` are missing.
pub fn decode_csv(data: &[u8]) -> Result<Samples> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(data);
    let mut rows: Vec<Vec<Option<f64>>> = vec![];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(format!("csv: {e}")))?;
        let row = rec
            .iter()
            .map(|f| {
                if f.is_empty() {
                    return Ok(None);
                }
                let v: f64 = f.parse().map_err(|_| Error::Format(format!("csv: bad number `{f}`")))?;
                Ok(v.is_finite().then_some(v))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let h = rows.len();
    if h == 0 {
        return Err(Error::Format("csv: no rows".into()));
    }
    let w = rows[0].len();
    if rows.iter().any(|r| r.len() != w) {
        return Err(Error::Format("csv: ragged rows".into()));
    }
    Grid::from_vec(w, h, rows.into_iter().flatten().collect())
}

pub fn encode_csv(s: &Samples) -> Vec<u8> {
    let mut out = vec![];
    for y in 0..s.height() {
        let line: Vec<String> = (0..s.width())
            .map(|x| s.get(x, y).map_or(String::new(), |v| format!("{v:?}")))
            .collect();
        writeln!(out, "{}", line.join(",")).unwrap();
    }
    out
}

pub fn decode(format: ImageFormat, data: &[u8], zero_is_missing: bool) -> Result<Samples> {
    match format {
        ImageFormat::Pgm => Ok(pgm_to_metres(&decode_pgm(data)?, zero_is_missing)),
        ImageFormat::Pfm => decode_pfm(data),
        ImageFormat::Csv => decode_csv(data),
    }
}

pub fn read_samples(path: &Path, zero_is_missing: bool) -> Result<Samples> {
    let format = ImageFormat::from_path(path)?;
    let data = std::fs::read(path)?;
    decode(format, &data, zero_is_missing)
}

/// A mask image: any non-zero sample is set.
pub fn read_mask(path: &Path) -> Result<PixelMask> {
    let s = read_samples(path, false)?;
    PixelMask::from_fn(s.width(), s.height(), |x, y| s.get(x, y).is_some_and(|v| v != 0.0))
}

pub fn mask_to_pgm(m: &PixelMask) -> Vec<u8> {
    encode_pgm8(&m.grid().map(|&b| if b { 255u8 } else { 0 }))
}

pub type Rgb = [u8; 3];

/// Binary PPM (`P6`).
pub fn encode_ppm(g: &Grid<Rgb>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", g.width(), g.height()).into_bytes();
    for p in g.data() {
        out.extend_from_slice(p);
    }
    out
}

pub fn decode_ppm(data: &[u8]) -> Result<Grid<Rgb>> {
    let (t, off) = header_tokens(data, 4)?;
    if t[0] != "P6" || t[3] != "255" {
        return Err(Error::Format("expected an 8-bit P6 image".into()));
    }
    let (w, h) = (parse_dim(&t[1], "width")?, parse_dim(&t[2], "height")?);
    let body = &data[off..];
    if body.len() < 3 * w * h {
        return Err(Error::Format("truncated PPM raster".into()));
    }
    Grid::from_vec(w, h, body[..3 * w * h].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}
