use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TspError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeWeightType {
    /// TSPLIB rounded Euclidean distance.
    #[serde(rename = "EUC_2D")]
    Euc2d,
    /// Unrounded Euclidean distance, used for random unit-square instances
    /// where rounding would collapse every edge to 0 or 1.
    #[serde(rename = "EXACT_2D")]
    Exact2d,
}

impl EdgeWeightType {
    pub fn distance(self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let dx = a.0 - b.0;
        let dy = a.1 - b.1;
        let exact = libm::sqrt(dx * dx + dy * dy);
        match self {
            // TSPLIB nint
            EdgeWeightType::Euc2d => libm::floor(exact + 0.5),
            EdgeWeightType::Exact2d => exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspInstance {
    pub name: String,
    pub dimension: usize,
    pub coords: Vec<(f64, f64)>,
    pub edge_weight_type: EdgeWeightType,
    #[serde(default)]
    pub best_known: Option<f64>,
}

impl TspInstance {
    pub fn new(
        name: impl Into<String>,
        coords: Vec<(f64, f64)>,
        edge_weight_type: EdgeWeightType,
    ) -> Result<Self, TspError> {
        let inst = TspInstance {
            name: name.into(),
            dimension: coords.len(),
            coords,
            edge_weight_type,
            best_known: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), TspError> {
        if self.dimension < 3 || self.dimension != self.coords.len() {
            return Err(TspError::InvalidInstance(format!(
                "dimension {} with {} coordinates",
                self.dimension,
                self.coords.len()
            )));
        }
        if self.coords.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(TspError::InvalidInstance("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.edge_weight_type.distance(self.coords[i], self.coords[j])
    }

    pub fn distance_matrix(&self) -> DistanceMatrix {
        let n = self.dimension;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.distance(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        DistanceMatrix { n, data }
    }

    /// Every undirected edge `(i, j, dist)` with `i < j`, row-major.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.dimension;
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push((i, j, self.distance(i, j)));
            }
        }
        out
    }
}

/// Symmetric dense matrix of edge values.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from per-edge values in [`TspInstance::edges`] order.
    pub fn from_edge_values(n: usize, values: &[f64]) -> Self {
        let mut data = vec![0.0; n * n];
        let mut it = values.iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = *it.next().expect("one value per edge");
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        DistanceMatrix { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Closed-cycle sum; `order` must be a permutation.
    pub fn cycle_cost(&self, order: &[usize]) -> f64 {
        let n = order.len();
        (0..n).map(|i| self.get(order[i], order[(i + 1) % n])).sum()
    }
}

pub fn check_permutation(order: &[usize], n: usize) -> Result<(), TspError> {
    if order.len() != n {
        return Err(TspError::NotAPermutation);
    }
    let mut seen = vec![false; n];
    for &c in order {
        if c >= n || seen[c] {
            return Err(TspError::NotAPermutation);
        }
        seen[c] = true;
    }
    Ok(())
}

/// Length of the closed tour visiting `order`.
pub fn tour_length(inst: &TspInstance, order: &[usize]) -> Result<f64, TspError> {
    check_permutation(order, inst.dimension)?;
    let n = order.len();
    Ok((0..n).map(|i| inst.distance(order[i], order[(i + 1) % n])).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub length: f64,
}

impl Tour {
    pub fn new(inst: &TspInstance, order: Vec<usize>) -> Result<Self, TspError> {
        let length = tour_length(inst, &order)?;
        Ok(Tour { order, length })
    }
}

/// `(base − cae) / base × 100`. Positive when the candidate is shorter.
pub fn gap_percent(base_obj: f64, cae_obj: f64) -> Result<f64, TspError> {
    if base_obj.is_nan() || base_obj <= 0.0 {
        return Err(TspError::NonpositiveBase(base_obj));
    }
    Ok((base_obj - cae_obj) / base_obj * 100.0)
}

/// Uniform points in the unit square with unrounded distances.
pub fn random_uniform_instance(name: impl Into<String>, n: usize, seed: u64) -> Result<TspInstance, TspError> {
    let unit = Uniform::new(0.0, 1.0).expect("static bounds");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n).map(|_| (unit.sample(&mut rng), unit.sample(&mut rng))).collect();
    TspInstance::new(name, coords, EdgeWeightType::Exact2d)
}

/// Parses TSPLIB keyword text with a `NODE_COORD_SECTION`.
pub fn parse_instance(text: &str) -> Result<TspInstance, TspError> {
    let err = |line: usize, message: &str| TspError::Parse {
        line,
        message: message.to_string(),
    };
    let mut name = String::new();
    let mut dimension: Option<usize> = None;
    let mut weight_type: Option<EdgeWeightType> = None;
    let mut coords: Vec<Option<(f64, f64)>> = Vec::new();
    let mut in_coords = false;
    let mut seen_section = false;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        if in_coords {
            let mut parts = line.split_whitespace();
            let (Some(id), Some(x), Some(y)) = (parts.next(), parts.next(), parts.next()) else {
                // next keyword section after coordinates
                if line.ends_with("SECTION") || line.contains(':') {
                    in_coords = false;
                    continue;
                }
                return Err(err(lineno, "expected `<id> <x> <y>`"));
            };
            let id: usize = id.parse().map_err(|_| err(lineno, "bad node id"))?;
            let x: f64 = x.parse().map_err(|_| err(lineno, "bad x coordinate"))?;
            let y: f64 = y.parse().map_err(|_| err(lineno, "bad y coordinate"))?;
            let dim = coords.len();
            if id == 0 || id > dim {
                return Err(err(lineno, "node id out of range"));
            }
            if coords[id - 1].replace((x, y)).is_some() {
                return Err(err(lineno, "duplicate node id"));
            }
            continue;
        }
        if line == "NODE_COORD_SECTION" {
            let dim = dimension.ok_or_else(|| err(lineno, "NODE_COORD_SECTION before DIMENSION"))?;
            coords = vec![None; dim];
            in_coords = true;
            seen_section = true;
            continue;
        }
        let (key, value) = match line.split_once(':') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => (line, ""),
        };
        match key {
            "NAME" => name = value.to_string(),
            "DIMENSION" => {
                dimension = Some(value.parse().map_err(|_| err(lineno, "bad DIMENSION"))?);
            }
            "EDGE_WEIGHT_TYPE" => {
                weight_type = Some(match value {
                    "EUC_2D" => EdgeWeightType::Euc2d,
                    "EXACT_2D" => EdgeWeightType::Exact2d,
                    other => return Err(TspError::UnsupportedWeightType(other.to_string())),
                });
            }
            "TYPE" | "COMMENT" | "CAPACITY" => {}
            _ if key.ends_with("SECTION") => {
                return Err(err(lineno, "unsupported section"));
            }
            _ => {}
        }
    }
    if !seen_section {
        return Err(err(last_line, "missing NODE_COORD_SECTION"));
    }
    let coords: Option<Vec<(f64, f64)>> = coords.into_iter().collect();
    let coords = coords.ok_or_else(|| err(last_line, "coordinate section incomplete"))?;
    let mut inst = TspInstance::new(name, coords, weight_type.unwrap_or(EdgeWeightType::Euc2d))?;
    inst.best_known = None;
    Ok(inst)
}
