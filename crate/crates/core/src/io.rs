//! Film files, JSON artifacts, curve CSVs, PNG frames and checkpoint files.
//!
//! Film files start with a fixed 64-byte little-endian header:
//!
//! | offset | size | field                                          |
//! |--------|------|------------------------------------------------|
//! | 0      | 4    | magic, `TFLM` raw or `TFLN` normalized         |
//! | 4      | 2    | format version (u16)                           |
//! | 6      | 1    | label, 0 good 1 medium 2 bad 255 unlabeled     |
//! | 7      | 1    | payload kind, 0 u16 digits 1 f32               |
//! | 8      | 4    | width (u32)                                    |
//! | 12     | 4    | height (u32)                                   |
//! | 16     | 4    | n_frames (u32)                                 |
//! | 20     | 8    | frame rate in Hz (f64)                         |
//! | 28     | 4    | saturated sample count (u32, 0 if normalized)  |
//! | 32     | 1    | specimen id length                             |
//! | 33     | 31   | specimen id, UTF-8, zero padded                |
//!
//! The payload follows frame-major, then row-major. A normalized film keeps
//! its reference settings and intensity curve in a `<file>.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classifier::{checkpoint, CnnModel};
use crate::preprocess::{IntensityCurve, NormalizedFilm};
use crate::thermal::ThermalFilm;
use crate::{Error, QualityClass, Result};

pub const HEADER_LEN: usize = 64;
pub const FORMAT_VERSION: u16 = 1;
pub const MAGIC_RAW: [u8; 4] = *b"TFLM";
pub const MAGIC_NORMALIZED: [u8; 4] = *b"TFLN";
pub const MAX_ID_LEN: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadKind {
    U16,
    F32,
}

impl PayloadKind {
    pub fn element_size(self) -> usize {
        match self {
            PayloadKind::U16 => 2,
            PayloadKind::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilmFileHeader {
    pub magic: [u8; 4],
    pub version: u16,
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub frame_rate: f64,
    pub label: Option<QualityClass>,
    pub payload: PayloadKind,
    pub saturated: u32,
    pub specimen_id: String,
}

impl FilmFileHeader {
    pub fn payload_len(&self) -> usize {
        self.width * self.height * self.n_frames * self.payload.element_size()
    }

    pub fn to_bytes(&self) -> Result<[u8; HEADER_LEN]> {
        let id = self.specimen_id.as_bytes();
        if id.len() > MAX_ID_LEN {
            return Err(Error::InvalidParameter(format!(
                "specimen id `{}` exceeds {MAX_ID_LEN} bytes",
                self.specimen_id
            )));
        }
        let dim = |v: usize, what: &str| {
            u32::try_from(v)
                .map_err(|_| Error::InvalidParameter(format!("{what} {v} does not fit the header")))
        };
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&self.magic);
        h[4..6].copy_from_slice(&self.version.to_le_bytes());
        h[6] = self.label.map_or(255, QualityClass::to_byte);
        h[7] = match self.payload {
            PayloadKind::U16 => 0,
            PayloadKind::F32 => 1,
        };
        h[8..12].copy_from_slice(&dim(self.width, "width")?.to_le_bytes());
        h[12..16].copy_from_slice(&dim(self.height, "height")?.to_le_bytes());
        h[16..20].copy_from_slice(&dim(self.n_frames, "n_frames")?.to_le_bytes());
        h[20..28].copy_from_slice(&self.frame_rate.to_le_bytes());
        h[28..32].copy_from_slice(&self.saturated.to_le_bytes());
        h[32] = id.len() as u8;
        h[33..33 + id.len()].copy_from_slice(id);
        Ok(h)
    }

    pub fn from_bytes(buf: &[u8], origin: &Path) -> Result<Self> {
        if buf.len() < HEADER_LEN {
            return Err(Error::format(
                origin,
                format!("file is {} bytes, shorter than the header", buf.len()),
            ));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
        let magic: [u8; 4] = buf[0..4].try_into().unwrap();
        if magic != MAGIC_RAW && magic != MAGIC_NORMALIZED {
            return Err(Error::format(origin, format!("unknown magic {magic:?}")));
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported format version {version}"),
            ));
        }
        let label = match buf[6] {
            255 => None,
            b => Some(
                QualityClass::from_byte(b)
                    .ok_or_else(|| Error::format(origin, format!("invalid label byte {b}")))?,
            ),
        };
        let payload = match buf[7] {
            0 => PayloadKind::U16,
            1 => PayloadKind::F32,
            b => return Err(Error::format(origin, format!("invalid payload kind {b}"))),
        };
        let id_len = buf[32] as usize;
        if id_len > MAX_ID_LEN {
            return Err(Error::format(
                origin,
                format!("specimen id length {id_len} exceeds {MAX_ID_LEN}"),
            ));
        }
        let specimen_id = std::str::from_utf8(&buf[33..33 + id_len])
            .map_err(|_| Error::format(origin, "specimen id is not UTF-8"))?
            .to_string();
        Ok(Self {
            magic,
            version,
            width: u32_at(8),
            height: u32_at(12),
            n_frames: u32_at(16),
            frame_rate: f64::from_le_bytes(buf[20..28].try_into().unwrap()),
            label,
            payload,
            saturated: u32_at(28) as u32,
            specimen_id,
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn checked_header(
    buf: &[u8],
    origin: &Path,
    magic: [u8; 4],
    payload: PayloadKind,
) -> Result<FilmFileHeader> {
    let header = FilmFileHeader::from_bytes(buf, origin)?;
    if header.magic != magic || header.payload != payload {
        return Err(Error::format(
            origin,
            format!("expected a {} film", String::from_utf8_lossy(&magic)),
        ));
    }
    let expected = header.payload_len();
    if buf.len() - HEADER_LEN != expected {
        return Err(Error::format(
            origin,
            format!(
                "payload is {} bytes, header implies {expected}",
                buf.len() - HEADER_LEN
            ),
        ));
    }
    Ok(header)
}

/// Reads and parses only the header of a film file.
pub fn read_header(path: &Path) -> Result<FilmFileHeader> {
    use std::io::Read;
    let mut buf = [0u8; HEADER_LEN];
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    f.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(path, "file is shorter than the header"),
        _ => Error::io(path, e),
    })?;
    FilmFileHeader::from_bytes(&buf, path)
}

pub fn encode_tfilm(film: &ThermalFilm) -> Result<Vec<u8>> {
    let header = FilmFileHeader {
        magic: MAGIC_RAW,
        version: FORMAT_VERSION,
        width: film.width,
        height: film.height,
        n_frames: film.n_frames,
        frame_rate: film.frame_rate,
        label: film.label,
        payload: PayloadKind::U16,
        saturated: film.saturated,
        specimen_id: film.specimen_id.clone(),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len());
    out.extend_from_slice(&header.to_bytes()?);
    for d in &film.data {
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tfilm(buf: &[u8], origin: &Path) -> Result<ThermalFilm> {
    let h = checked_header(buf, origin, MAGIC_RAW, PayloadKind::U16)?;
    let data = buf[HEADER_LEN..]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let mut film = ThermalFilm::new(
        h.width,
        h.height,
        h.n_frames,
        h.frame_rate,
        data,
        h.label,
        &h.specimen_id,
    )?;
    film.saturated = h.saturated;
    Ok(film)
}

pub fn write_tfilm(path: &Path, film: &ThermalFilm) -> Result<()> {
    write_file(path, &encode_tfilm(film)?)
}

pub fn read_tfilm(path: &Path) -> Result<ThermalFilm> {
    decode_tfilm(&read_file(path)?, path)
}

/// Reference settings and curve of a normalized film.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfilmSidecar {
    pub specimen_id: String,
    pub t0_frames: (usize, usize),
    pub t_norm_frame: usize,
    pub eps: f64,
    pub curve: Vec<f64>,
    pub provenance: Option<Provenance>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_nfilm(film: &NormalizedFilm) -> Result<Vec<u8>> {
    let header = FilmFileHeader {
        magic: MAGIC_NORMALIZED,
        version: FORMAT_VERSION,
        width: film.width,
        height: film.height,
        n_frames: film.n_frames,
        frame_rate: film.frame_rate,
        label: film.label,
        payload: PayloadKind::F32,
        saturated: 0,
        specimen_id: film.specimen_id.clone(),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len());
    out.extend_from_slice(&header.to_bytes()?);
    for v in &film.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Rebuilds a normalized film from its binary file and sidecar. Pixels are
/// valid exactly where the normalizing frame is non-zero, since valid
/// pixels equal 1 there.
pub fn decode_nfilm(buf: &[u8], sidecar: NfilmSidecar, origin: &Path) -> Result<NormalizedFilm> {
    let h = checked_header(buf, origin, MAGIC_NORMALIZED, PayloadKind::F32)?;
    if sidecar.specimen_id != h.specimen_id {
        return Err(Error::format(
            origin,
            "sidecar belongs to a different specimen",
        ));
    }
    if sidecar.curve.len() != h.n_frames
        || sidecar.t_norm_frame == 0
        || sidecar.t_norm_frame > h.n_frames
    {
        return Err(Error::format(
            origin,
            "sidecar does not match the film dimensions",
        ));
    }
    let data: Vec<f32> = buf[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let n = h.width * h.height;
    let norm = &data[(sidecar.t_norm_frame - 1) * n..sidecar.t_norm_frame * n];
    let valid = norm.iter().map(|&v| v != 0.0).collect();
    Ok(NormalizedFilm {
        width: h.width,
        height: h.height,
        n_frames: h.n_frames,
        frame_rate: h.frame_rate,
        data,
        t0_frames: sidecar.t0_frames,
        t_norm_frame: sidecar.t_norm_frame,
        eps: sidecar.eps,
        valid,
        curve: IntensityCurve {
            values: sidecar.curve,
        },
        label: h.label,
        specimen_id: h.specimen_id,
    })
}

pub fn write_nfilm(
    path: &Path,
    film: &NormalizedFilm,
    provenance: Option<&Provenance>,
) -> Result<()> {
    write_file(path, &encode_nfilm(film)?)?;
    let sidecar = NfilmSidecar {
        specimen_id: film.specimen_id.clone(),
        t0_frames: film.t0_frames,
        t_norm_frame: film.t_norm_frame,
        eps: film.eps,
        curve: film.curve.values.clone(),
        provenance: provenance.cloned(),
    };
    write_json(&sidecar_path(path), &sidecar)
}

pub fn read_nfilm(path: &Path) -> Result<NormalizedFilm> {
    let sidecar: NfilmSidecar = read_json(&sidecar_path(path))?;
    decode_nfilm(&read_file(path)?, sidecar, path)
}

/// Identifies the configuration, seed and program version behind an
/// artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            config_hash: config_hash.into(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, to_json(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let buf = read_file(path)?;
    serde_json::from_slice(&buf).map_err(|e| Error::format(path, e.to_string()))
}

/// `frame,mean_digits` rows, frames 1-based.
pub fn curve_csv(curve: &IntensityCurve) -> String {
    let mut s = String::from("frame,mean_digits\n");
    for (i, v) in curve.values.iter().enumerate() {
        s.push_str(&format!("{},{v}\n", i + 1));
    }
    s
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    write_file(path, buf.get_ref())
}

pub fn write_checkpoint(path: &Path, model: &CnnModel<f32>) -> Result<()> {
    write_file(path, &checkpoint::to_bytes(model))
}

pub fn read_checkpoint(path: &Path) -> Result<CnnModel<f32>> {
    checkpoint::from_bytes(&read_file(path)?, &path.display().to_string())
}
