use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum TerrainError {
    #[error("terrain file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("terrain header {path}: {msg}")]
    Header { path: PathBuf, msg: String },
    #[error("terrain grid row {row}: {msg}")]
    Grid { row: usize, msg: String },
    #[error("invalid terrain: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    Heightfield,
}

/// Ground description. Heightfield node `(i, j)` sits at
/// `(origin_x + i·cell_size, origin_y + j·cell_size)` and is stored at
/// `heights[j * nx + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain<T: Real> {
    pub kind: TerrainKind,
    pub heights: Vec<T>,
    pub nx: usize,
    pub ny: usize,
    pub cell_size: T,
    pub origin: (T, T),
    pub friction: T,
}

/// Header of an on-disk heightfield; the grid itself is a CSV with one row
/// per `y` index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerrainHeader {
    pub cell_size: f64,
    pub friction: f64,
    #[serde(default)]
    pub origin_x: f64,
    #[serde(default)]
    pub origin_y: f64,
    pub heights_csv: String,
}

impl<T: Real> Terrain<T> {
    pub fn flat(friction: T) -> Self {
        Self {
            kind: TerrainKind::Flat,
            heights: Vec::new(),
            nx: 0,
            ny: 0,
            cell_size: T::one(),
            origin: (T::zero(), T::zero()),
            friction,
        }
    }

    pub fn heightfield(
        heights: Vec<T>,
        nx: usize,
        ny: usize,
        cell_size: T,
        origin: (T, T),
        friction: T,
    ) -> Result<Self, TerrainError> {
        let t = Self {
            kind: TerrainKind::Heightfield,
            heights,
            nx,
            ny,
            cell_size,
            origin,
            friction,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        if !(self.friction > T::zero()) {
            return Err(TerrainError::Invalid("friction must be positive".into()));
        }
        if self.kind == TerrainKind::Heightfield {
            if self.nx < 2 || self.ny < 2 || self.heights.len() != self.nx * self.ny {
                return Err(TerrainError::Invalid(format!(
                    "grid {}x{} with {} heights",
                    self.nx,
                    self.ny,
                    self.heights.len()
                )));
            }
            if !(self.cell_size > T::zero()) {
                return Err(TerrainError::Invalid("cell size must be positive".into()));
            }
            if self.heights.iter().any(|h| !h.is_finite()) {
                return Err(TerrainError::Invalid("non-finite height".into()));
            }
        }
        Ok(())
    }

    /// Uniform random roughness of ±`amplitude` on a `size`×`size` m patch
    /// centred on the origin.
    pub fn rough<R: Rng>(rng: &mut R, amplitude: T, size: T, cell_size: T, friction: T) -> Self {
        let n = (size / cell_size).to_f64_lossy().ceil() as usize + 1;
        let a = amplitude.to_f64_lossy();
        let heights = (0..n * n)
            .map(|_| T::lit(if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 }))
            .collect();
        let half = size * T::lit(0.5);
        Self::heightfield(heights, n, n, cell_size, (-half, -half), friction)
            .expect("generated grid is valid")
    }

    /// Plane rising along +x at `angle` radians, zero height at x = 0.
    pub fn slope(angle: T, size: T, cell_size: T, friction: T) -> Self {
        let n = (size / cell_size).to_f64_lossy().ceil() as usize + 1;
        let half = size * T::lit(0.5);
        let tan = angle.tan();
        let mut heights = Vec::with_capacity(n * n);
        for _j in 0..n {
            for i in 0..n {
                let x = -half + cell_size * T::from_usize(i).expect("usize");
                heights.push(x * tan);
            }
        }
        Self::heightfield(heights, n, n, cell_size, (-half, -half), friction)
            .expect("generated grid is valid")
    }

    #[inline]
    fn node(&self, i: usize, j: usize) -> T {
        self.heights[j * self.nx + i]
    }

    /// Cell indices and fractional offsets, clamped to the grid.
    fn locate(&self, x: T, y: T) -> (usize, usize, T, T) {
        let fx = (x - self.origin.0) / self.cell_size;
        let fy = (y - self.origin.1) / self.cell_size;
        let max_x = T::from_usize(self.nx - 1).expect("usize");
        let max_y = T::from_usize(self.ny - 1).expect("usize");
        let fx = fx.clamp(T::zero(), max_x);
        let fy = fy.clamp(T::zero(), max_y);
        let i = (fx.floor().to_f64_lossy() as usize).min(self.nx - 2);
        let j = (fy.floor().to_f64_lossy() as usize).min(self.ny - 2);
        let tx = fx - T::from_usize(i).expect("usize");
        let ty = fy - T::from_usize(j).expect("usize");
        (i, j, tx, ty)
    }

    /// Ground height at `(x, y)`: zero for flat ground, bilinear inside a
    /// heightfield, edge value outside it.
    pub fn height(&self, x: T, y: T) -> T {
        match self.kind {
            TerrainKind::Flat => T::zero(),
            TerrainKind::Heightfield => {
                let (i, j, tx, ty) = self.locate(x, y);
                let one = T::one();
                let h00 = self.node(i, j);
                let h10 = self.node(i + 1, j);
                let h01 = self.node(i, j + 1);
                let h11 = self.node(i + 1, j + 1);
                h00 * (one - tx) * (one - ty) + h10 * tx * (one - ty) + h01 * (one - tx) * ty + h11 * tx * ty
            }
        }
    }

    /// Upward unit surface normal at `(x, y)`.
    pub fn normal(&self, x: T, y: T) -> Vector3<T> {
        match self.kind {
            TerrainKind::Flat => Vector3::z(),
            TerrainKind::Heightfield => {
                let (i, j, tx, ty) = self.locate(x, y);
                let one = T::one();
                let h00 = self.node(i, j);
                let h10 = self.node(i + 1, j);
                let h01 = self.node(i, j + 1);
                let h11 = self.node(i + 1, j + 1);
                let dhdx = ((h10 - h00) * (one - ty) + (h11 - h01) * ty) / self.cell_size;
                let dhdy = ((h01 - h00) * (one - tx) + (h11 - h10) * tx) / self.cell_size;
                Vector3::new(-dhdx, -dhdy, one).normalize()
            }
        }
    }
}

impl Terrain<f64> {
    /// Loads a heightfield from a TOML header that names its CSV grid
    /// (relative paths resolve against the header's directory).
    pub fn load(header_path: &Path) -> Result<Self, TerrainError> {
        let text = std::fs::read_to_string(header_path).map_err(|source| TerrainError::Io {
            path: header_path.to_path_buf(),
            source,
        })?;
        let header: TerrainHeader = toml::from_str(&text).map_err(|e| TerrainError::Header {
            path: header_path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let csv_path = header_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&header.heights_csv);
        let grid = std::fs::read_to_string(&csv_path).map_err(|source| TerrainError::Io {
            path: csv_path.clone(),
            source,
        })?;
        let (heights, nx, ny) = parse_grid(&grid)?;
        Self::heightfield(
            heights,
            nx,
            ny,
            header.cell_size,
            (header.origin_x, header.origin_y),
            header.friction,
        )
    }

    /// Writes `<stem>.toml` and `<stem>.csv` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf, TerrainError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| TerrainError::Io { path, source }
        };
        let csv_name = format!("{stem}.csv");
        let mut csv = String::new();
        for j in 0..self.ny {
            let row: Vec<String> = (0..self.nx).map(|i| format!("{:?}", self.node(i, j))).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        let csv_path = dir.join(&csv_name);
        std::fs::write(&csv_path, csv).map_err(io(&csv_path))?;
        let header = TerrainHeader {
            cell_size: self.cell_size,
            friction: self.friction,
            origin_x: self.origin.0,
            origin_y: self.origin.1,
            heights_csv: csv_name,
        };
        let header_path = dir.join(format!("{stem}.toml"));
        let text = toml::to_string(&header).map_err(|e| TerrainError::Invalid(e.to_string()))?;
        std::fs::write(&header_path, text).map_err(io(&header_path))?;
        Ok(header_path)
    }
}

fn parse_grid(text: &str) -> Result<(Vec<f64>, usize, usize), TerrainError> {
    let mut heights = Vec::new();
    let mut nx = 0;
    let mut ny = 0;
    for (row, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let values = values.map_err(|e| TerrainError::Grid {
            row,
            msg: e.to_string(),
        })?;
        if ny == 0 {
            nx = values.len();
        } else if values.len() != nx {
            return Err(TerrainError::Grid {
                row,
                msg: format!("expected {nx} columns, found {}", values.len()),
            });
        }
        heights.extend(values);
        ny += 1;
    }
    Ok((heights, nx, ny))
}
