//! File formats: headed CSV logs, binary PPM/PGM images and plain-text
//! homographies.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drivebus::{CanFrame, TraceRecord};
use crate::localization::LocalPoint;
use crate::perception::{BinaryMask, Homography, RgbImage};
use crate::planning::DepthScan;
use crate::track::{CenterlinePoint, Raceline, Waypoint};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("no data rows")]
    Empty,
    #[error("bad image: {0}")]
    Image(String),
    #[error("bad homography: {0}")]
    Homography(String),
}

pub type Result<T> = std::result::Result<T, IoError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn csv_error(e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    let msg = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    IoError::Parse { line, msg }
}

/// Reads headed CSV rows, naming the first of `columns` absent from the
/// header.
pub fn read_rows<T: DeserializeOwned, R: Read>(reader: R, columns: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if let Some(missing) = columns.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        return Err(IoError::MissingColumn(missing.to_string()));
    }
    rdr.deserialize().map(|r| r.map_err(csv_error)).collect()
}

pub fn write_rows<T: Serialize, W: Write>(writer: W, rows: &[T], columns: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(columns).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush().map_err(|source| IoError::File { path: String::new(), source })
}

pub fn read_csv<T: DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<Vec<T>> {
    read_rows(open(path)?, columns)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], columns: &[&str]) -> Result<()> {
    write_rows(create(path)?, rows, columns)
}

pub const TRACK_COLUMNS: &[&str] = &["x_m", "y_m", "w_left_m", "w_right_m"];
pub const RACELINE_COLUMNS: &[&str] = &["s_m", "x_m", "y_m", "kappa_1pm", "v_mps"];
pub const REPLAY_COLUMNS: &[&str] =
    &["t_s", "lat_rad", "lon_rad", "gnss_valid", "gnss_var_m2", "imu_yaw_rad", "imu_yaw_var_rad2", "v_mps", "omega_radps"];
pub const POSE_COLUMNS: &[&str] = &["t_s", "x_m", "y_m", "psi_rad", "cov_xx", "cov_yy", "cov_pp"];
pub const SCAN_COLUMNS: &[&str] = &["angle_rad", "distance_m"];
pub const COMMAND_COLUMNS: &[&str] = &["t_s", "steering_rad", "speed_mps", "gap_i", "gap_j"];
pub const FRAME_COLUMNS: &[&str] = &["t_s", "id_hex", "payload_hex"];
pub const TRAJECTORY_COLUMNS: &[&str] =
    &["t_s", "x_m", "y_m", "psi_rad", "v_mps", "steering_rad", "est_x_m", "est_y_m", "est_psi_rad", "cross_track_m", "on_track"];
pub const SCAN_LOG_COLUMNS: &[&str] = &["t_s", "angle_rad", "distance_m"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TrackRow {
    x_m: f64,
    y_m: f64,
    w_left_m: f64,
    w_right_m: f64,
}

pub fn read_track<R: Read>(reader: R) -> Result<Vec<CenterlinePoint<f64>>> {
    let rows: Vec<TrackRow> = read_rows(reader, TRACK_COLUMNS)?;
    if rows.is_empty() {
        return Err(IoError::Empty);
    }
    Ok(rows.into_iter().map(|r| CenterlinePoint { p: LocalPoint::new(r.x_m, r.y_m), w_left: r.w_left_m, w_right: r.w_right_m }).collect())
}

pub fn read_track_csv(path: &Path) -> Result<Vec<CenterlinePoint<f64>>> {
    read_track(open(path)?)
}

pub fn write_track_csv(path: &Path, points: &[CenterlinePoint<f64>]) -> Result<()> {
    let rows: Vec<TrackRow> = points.iter().map(|c| TrackRow { x_m: c.p.x, y_m: c.p.y, w_left_m: c.w_left, w_right_m: c.w_right }).collect();
    write_csv(path, &rows, TRACK_COLUMNS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct RacelineRow {
    s_m: f64,
    x_m: f64,
    y_m: f64,
    kappa_1pm: f64,
    v_mps: f64,
}

pub fn write_raceline_csv(path: &Path, raceline: &Raceline<f64>) -> Result<()> {
    let rows: Vec<RacelineRow> = raceline
        .waypoints
        .iter()
        .map(|w| RacelineRow { s_m: w.s, x_m: w.pos.x, y_m: w.pos.y, kappa_1pm: w.kappa, v_mps: w.v })
        .collect();
    write_csv(path, &rows, RACELINE_COLUMNS)
}

/// The file does not record closure; for a closed line the length includes
/// the seam back to the first point.
pub fn read_raceline_csv(path: &Path, closed: bool) -> Result<Raceline<f64>> {
    let rows: Vec<RacelineRow> = read_csv(path, RACELINE_COLUMNS)?;
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(IoError::Empty),
    };
    let seam = if closed { (last.x_m - first.x_m).hypot(last.y_m - first.y_m) } else { 0.0 };
    let waypoints = rows.iter().map(|r| Waypoint { pos: LocalPoint::new(r.x_m, r.y_m), kappa: r.kappa_1pm, v: r.v_mps, s: r.s_m }).collect();
    Ok(Raceline { waypoints, closed, length: last.s_m + seam })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ScanCsvRow {
    angle_rad: f64,
    distance_m: f64,
}

pub fn write_scan_csv(path: &Path, scan: &DepthScan<f64>) -> Result<()> {
    let rows: Vec<ScanCsvRow> = scan.angles.iter().zip(&scan.distances).map(|(&angle_rad, &distance_m)| ScanCsvRow { angle_rad, distance_m }).collect();
    write_csv(path, &rows, SCAN_COLUMNS)
}

/// Reads a scan; distances are kept as written and `max_range` is their
/// maximum.
pub fn read_scan_csv(path: &Path) -> Result<DepthScan<f64>> {
    let rows: Vec<ScanCsvRow> = read_csv(path, SCAN_COLUMNS)?;
    if rows.is_empty() {
        return Err(IoError::Empty);
    }
    let max_range = rows.iter().map(|r| r.distance_m).fold(0.0, f64::max);
    Ok(DepthScan { angles: rows.iter().map(|r| r.angle_rad).collect(), distances: rows.iter().map(|r| r.distance_m).collect(), max_range })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FrameRow {
    t_s: f64,
    id_hex: String,
    payload_hex: String,
}

pub fn write_frame_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let rows: Vec<FrameRow> =
        records.iter().map(|r| FrameRow { t_s: r.t, id_hex: format!("{:03X}", r.frame.id()), payload_hex: r.frame.payload_hex() }).collect();
    write_csv(path, &rows, FRAME_COLUMNS)
}

pub fn read_frame_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let rows: Vec<FrameRow> = read_csv(path, FRAME_COLUMNS)?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i as u64 + 2;
            let bad = |msg: String| IoError::Parse { line, msg };
            let id = u16::from_str_radix(&r.id_hex, 16).map_err(|e| bad(e.to_string()))?;
            if r.payload_hex.len() != 16 || !r.payload_hex.is_ascii() {
                return Err(bad(format!("payload must be 16 hex characters, got {:?}", r.payload_hex)));
            }
            let bytes = (0..8)
                .map(|k| u8::from_str_radix(&r.payload_hex[2 * k..2 * k + 2], 16))
                .collect::<std::result::Result<Vec<u8>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            let frame = CanFrame::new(id, &bytes).map_err(|e| bad(e.to_string()))?;
            Ok(TraceRecord { t: r.t_s, frame })
        })
        .collect()
}

/// Header tokens of a binary PNM file and the offset of the raster.
fn pnm_header(data: &[u8], magic: &str) -> Result<(usize, usize, usize)> {
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::Image("truncated header".into()));
        }
        tokens.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    if tokens[0] != magic {
        return Err(IoError::Image(format!("expected {magic}, got {:?}", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| IoError::Image(format!("bad header field {s:?}")));
    let (w, h, max) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if max != 255 {
        return Err(IoError::Image(format!("only 8-bit images are supported, maxval {max}")));
    }
    if w == 0 || h == 0 {
        return Err(IoError::Image("empty image".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((w, h, pos + 1))
}

pub fn decode_ppm(data: &[u8]) -> Result<RgbImage> {
    let (w, h, off) = pnm_header(data, "P6")?;
    let need = w * h * 3;
    if data.len() < off + need {
        return Err(IoError::Image(format!("expected {need} raster bytes, found {}", data.len().saturating_sub(off))));
    }
    RgbImage::new(w, h, data[off..off + need].to_vec()).map_err(|e| IoError::Image(e.to_string()))
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Nonzero samples are set.
pub fn decode_pgm(data: &[u8]) -> Result<BinaryMask> {
    let (w, h, off) = pnm_header(data, "P5")?;
    if data.len() < off + w * h {
        return Err(IoError::Image("truncated raster".into()));
    }
    let mut mask = BinaryMask::zeros(w, h);
    for v in 0..h {
        for u in 0..w {
            mask.set(u, v, data[off + v * w + u] != 0);
        }
    }
    Ok(mask)
}

/// Set pixels are written as 255, others as 0.
pub fn encode_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    for v in 0..mask.height {
        for u in 0..mask.width {
            out.push(if mask.get(u, v) { 255 } else { 0 });
        }
    }
    out
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn write_bytes(path: &Path, data: &[u8]) -> Result<()> {
    std::fs::write(path, data).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    decode_ppm(&read_bytes(path)?)
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_bytes(path, &encode_ppm(img))
}

pub fn read_pgm(path: &Path) -> Result<BinaryMask> {
    decode_pgm(&read_bytes(path)?)
}

pub fn write_pgm(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_bytes(path, &encode_pgm(mask))
}

/// Three rows of three whitespace-separated numbers; `#` starts a comment.
pub fn parse_homography(text: &str) -> Result<Homography> {
    let values: Vec<f64> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|_| IoError::Homography(format!("not a number: {t:?}"))))
        .collect::<Result<_>>()?;
    if values.len() != 9 {
        return Err(IoError::Homography(format!("expected 9 entries, found {}", values.len())));
    }
    let h = [[values[0], values[1], values[2]], [values[3], values[4], values[5]], [values[6], values[7], values[8]]];
    Homography::from_matrix(h).map_err(|e| IoError::Homography(e.to_string()))
}

pub fn format_homography(h: &Homography) -> String {
    h.h.iter().map(|r| format!("{} {} {}\n", r[0], r[1], r[2])).collect()
}

pub fn read_homography(path: &Path) -> Result<Homography> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| IoError::Homography(e.to_string()))?;
    parse_homography(&text)
}

pub fn write_homography(path: &Path, h: &Homography) -> Result<()> {
    write_bytes(path, format_homography(h).as_bytes())
}
