//! Terrain raster IO and synthetic terrain.
//!
//! File layout: the 8-byte magic `EPMFTER1`, then little-endian `u32 rows`,
//! `u32 cols`, `f64 origin_x`, `f64 origin_y`, `f64 cell_x`, `f64 cell_y`,
//! then `rows · cols` `f32` altitudes in row-major order.

use std::fs;
use std::path::Path;

use epmf_core::TerrainMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAGIC: &[u8; 8] = b"EPMFTER1";
const HEADER_LEN: usize = 8 + 4 + 4 + 4 * 8;

#[derive(Debug, thiserror::Error)]
pub enum TerrainError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("terrain format error at byte {offset}: {field}: {reason}")]
    Format { offset: usize, field: &'static str, reason: String },
    #[error("invalid terrain: {0}")]
    Invalid(#[from] epmf_core::Error),
}

fn format_err(offset: usize, field: &'static str, reason: impl Into<String>) -> TerrainError {
    TerrainError::Format { offset, field, reason: reason.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], TerrainError> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| {
            format_err(self.pos, field, format!("truncated: need {N} bytes, {} left", self.bytes.len() - self.pos))
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn u32(&mut self, field: &'static str) -> Result<(u32, usize), TerrainError> {
        let at = self.pos;
        Ok((u32::from_le_bytes(self.take(field)?), at))
    }

    fn f64(&mut self, field: &'static str) -> Result<(f64, usize), TerrainError> {
        let at = self.pos;
        Ok((f64::from_le_bytes(self.take(field)?), at))
    }
}

/// Parses a terrain raster from bytes.
pub fn parse_terrain(bytes: &[u8]) -> Result<TerrainMap, TerrainError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 8] = r.take("magic")?;
    if &magic != MAGIC {
        return Err(format_err(0, "magic", format!("expected {:?}, found {:?}", MAGIC, magic)));
    }
    let (rows, rows_at) = r.u32("n_rows")?;
    let (cols, cols_at) = r.u32("n_cols")?;
    if rows < 2 {
        return Err(format_err(rows_at, "n_rows", format!("need at least 2 rows, got {rows}")));
    }
    if cols < 2 {
        return Err(format_err(cols_at, "n_cols", format!("need at least 2 columns, got {cols}")));
    }
    let mut header = [0.0; 4];
    for (slot, field) in header.iter_mut().zip(["origin_x", "origin_y", "cell_x", "cell_y"]) {
        let (v, at) = r.f64(field)?;
        if !v.is_finite() {
            return Err(format_err(at, field, format!("not finite: {v}")));
        }
        if field.starts_with("cell") && v <= 0.0 {
            return Err(format_err(at, field, format!("cell size must be positive, got {v}")));
        }
        *slot = v;
    }
    let count = rows as usize * cols as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * count {
        return Err(format_err(
            HEADER_LEN,
            "altitudes",
            format!("expected {} bytes for {rows}x{cols} altitudes, found {}", 4 * count, payload.len()),
        ));
    }
    let mut altitudes = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        if !v.is_finite() {
            return Err(format_err(HEADER_LEN + 4 * i, "altitudes", format!("non-finite altitude {v}")));
        }
        altitudes.push(v as f64);
    }
    Ok(TerrainMap::new([header[0], header[1]], [header[2], header[3]], rows as usize, cols as usize, altitudes)?)
}

pub fn load_terrain(path: &Path) -> Result<TerrainMap, TerrainError> {
    let bytes = fs::read(path).map_err(|source| TerrainError::Io { path: path.display().to_string(), source })?;
    parse_terrain(&bytes)
}

/// Serialises a map; altitudes are stored as `f32`.
pub fn encode_terrain(map: &TerrainMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.altitudes().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(map.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(map.cols() as u32).to_le_bytes());
    for v in [map.origin()[0], map.origin()[1], map.cell_size()[0], map.cell_size()[1]] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &h in map.altitudes() {
        out.extend_from_slice(&(h as f32).to_le_bytes());
    }
    out
}

pub fn save_terrain(map: &TerrainMap, path: &Path) -> Result<(), TerrainError> {
    fs::write(path, encode_terrain(map)).map_err(|source| TerrainError::Io { path: path.display().to_string(), source })
}

/// Parameters of [`synthesize_terrain`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTerrain {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    /// Cell size in metres along both axes.
    pub cell: f64,
    /// Peak deviation from the base altitude in metres.
    pub roughness: f64,
}

impl Default for SyntheticTerrain {
    fn default() -> Self {
        Self { seed: 7, rows: 200, cols: 200, cell: 30.0, roughness: 100.0 }
    }
}

const BASE_ALTITUDE: f64 = 500.0;
/// Wavelength of the coarsest octave, in cells.
const BASE_WAVELENGTH: f64 = 64.0;
const OCTAVES: usize = 4;
const PERSISTENCE: f64 = 0.5;

/// Seeded value-noise terrain: `OCTAVES` layers of smoothly interpolated
/// lattice noise in `[-1, 1]`, weights summing to one, scaled by `roughness`
/// around a base altitude. Altitudes therefore stay within `±roughness` of
/// the base.
pub fn synthesize_terrain(params: &SyntheticTerrain, origin: [f64; 2]) -> Result<TerrainMap, TerrainError> {
    let SyntheticTerrain { seed, rows, cols, cell, roughness } = *params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm: f64 = (0..OCTAVES).map(|o| PERSISTENCE.powi(o as i32)).sum();
    let mut alt = vec![0.0; rows * cols];
    for o in 0..OCTAVES {
        let wavelength = BASE_WAVELENGTH / (1 << o) as f64;
        let amp = PERSISTENCE.powi(o as i32) / norm;
        let lr = (rows as f64 / wavelength).ceil() as usize + 2;
        let lc = (cols as f64 / wavelength).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..lr * lc).map(|_| rng.random_range(-1.0..=1.0)).collect();
        for r in 0..rows {
            let fy = r as f64 / wavelength;
            let (y0, ty) = (fy.floor() as usize, smooth(fy.fract()));
            for c in 0..cols {
                let fx = c as f64 / wavelength;
                let (x0, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let at = |y: usize, x: usize| lattice[y * lc + x];
                let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
                let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
                alt[r * cols + c] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    let altitudes = alt.into_iter().map(|v| BASE_ALTITUDE + roughness * v).collect();
    Ok(TerrainMap::new(origin, [cell, cell], rows, cols, altitudes)?)
}

/// Quintic fade with zero first and second derivative at the lattice nodes.
fn smooth(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TerrainMap {
        TerrainMap::new([10.0, -20.0], [30.0, 25.0], 2, 2, vec![1.5, 2.5, -3.25, 4.0]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let map = small();
        let bytes = encode_terrain(&map);
        assert_eq!(bytes.len(), HEADER_LEN + 16);
        let back = parse_terrain(&bytes).unwrap();
        assert_eq!(back, map);
        assert_eq!(encode_terrain(&back), bytes);
    }

    #[test]
    fn first_payload_value_is_node_zero() {
        let bytes = encode_terrain(&small());
        let first = f32::from_le_bytes(bytes[HEADER_LEN..HEADER_LEN + 4].try_into().unwrap());
        assert_eq!(parse_terrain(&bytes).unwrap().node(0, 0), first as f64);
    }

    #[test]
    fn errors_name_offset_and_field() {
        let mut bytes = encode_terrain(&small());
        bytes[3] = b'X';
        let err = parse_terrain(&bytes).unwrap_err().to_string();
        assert!(err.contains("byte 0") && err.contains("magic"), "{err}");

        let bytes = encode_terrain(&small());
        let err = parse_terrain(&bytes[..14]).unwrap_err().to_string();
        assert!(err.contains("byte 12") && err.contains("n_cols"), "{err}");

        let mut bytes = encode_terrain(&small());
        bytes[32..40].copy_from_slice(&(-1.0f64).to_le_bytes());
        let err = parse_terrain(&bytes).unwrap_err().to_string();
        assert!(err.contains("byte 32") && err.contains("cell_x"), "{err}");

        let bytes = encode_terrain(&small());
        let err = parse_terrain(&bytes[..bytes.len() - 1]).unwrap_err().to_string();
        assert!(err.contains("altitudes"), "{err}");
    }

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let p = SyntheticTerrain { seed: 3, rows: 50, cols: 70, cell: 30.0, roughness: 80.0 };
        let a = synthesize_terrain(&p, [0.0, 0.0]).unwrap();
        let b = synthesize_terrain(&p, [0.0, 0.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.altitudes().iter().all(|h| h.is_finite() && (h - BASE_ALTITUDE).abs() <= 80.0));
        let other = synthesize_terrain(&SyntheticTerrain { seed: 4, ..p }, [0.0, 0.0]).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn zero_roughness_is_flat() {
        let p = SyntheticTerrain { roughness: 0.0, rows: 10, cols: 10, ..Default::default() };
        let m = synthesize_terrain(&p, [0.0, 0.0]).unwrap();
        assert!(m.altitudes().iter().all(|&h| h == BASE_ALTITUDE));
    }
}
