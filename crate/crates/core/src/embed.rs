//! Diffusion-potential embedding of a topic distance matrix with a metric
//! MDS readout, plus CSV/SVG export.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{symmetric_eigen, Matrix};
use crate::error::{Error, Result};
use crate::geometry::{knn::nearest_of, DistanceMatrix};
use crate::hrg::AuthorTopicDist;
use crate::lda::derive_seed;
use crate::par::Exec;

const LOG_FLOOR: f64 = 1e-12;
const SIGMA_FLOOR: f64 = 1e-12;
const MAX_AUTO_T: u32 = 100;
pub const CSV_HEADER: &str = "# mstml-embedding v1";

/// Number of diffusion steps, or automatic selection from the entropy knee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawDiffusionTime", into = "RawDiffusionTime")]
pub enum DiffusionTime {
    #[default]
    Auto,
    Fixed(u32),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawDiffusionTime {
    Steps(u32),
    Word(String),
}

impl TryFrom<RawDiffusionTime> for DiffusionTime {
    type Error = String;
    fn try_from(raw: RawDiffusionTime) -> Result<Self, String> {
        match raw {
            RawDiffusionTime::Steps(0) => Err("diffusion time must be at least 1".into()),
            RawDiffusionTime::Steps(t) => Ok(DiffusionTime::Fixed(t)),
            RawDiffusionTime::Word(w) => w.parse(),
        }
    }
}

impl From<DiffusionTime> for RawDiffusionTime {
    fn from(t: DiffusionTime) -> Self {
        match t {
            DiffusionTime::Auto => RawDiffusionTime::Word("auto".into()),
            DiffusionTime::Fixed(t) => RawDiffusionTime::Steps(t),
        }
    }
}

impl std::str::FromStr for DiffusionTime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(DiffusionTime::Auto);
        }
        match s.parse::<u32>() {
            Ok(t) if t > 0 => Ok(DiffusionTime::Fixed(t)),
            _ => Err(format!(
                "diffusion time must be \"auto\" or a positive integer, got {s:?}"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub knn_k: usize,
    pub t: DiffusionTime,
    pub out_dim: usize,
    /// Stress refinement sweeps; 0 leaves the classical MDS solution.
    pub stress_iters: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            knn_k: 5,
            t: DiffusionTime::Auto,
            out_dim: 2,
            stress_iters: 200,
            step: 1e-2,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 {
            return Err(Error::Config("embed.knn_k must be positive".into()));
        }
        if self.out_dim == 0 {
            return Err(Error::Config("embed.out_dim must be positive".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config("embed.step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    /// `n × out_dim`.
    pub coords: Matrix,
    pub t: u32,
    /// All input distances were equal, so MDS ran on the distances directly.
    pub degenerate: bool,
    pub stress: f64,
}

impl EmbeddingResult {
    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows() == 0
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclid(self.coords.row(i), self.coords.row(j))
    }
}

pub fn diffuse_embed(d: &DistanceMatrix, cfg: &EmbedConfig, exec: Exec) -> Result<EmbeddingResult> {
    cfg.validate()?;
    let n = d.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "embedding needs at least 3 points, got {n}"
        )));
    }
    if cfg.knn_k >= n {
        return Err(Error::InvalidInput(format!(
            "knn_k = {} must be below n = {n}",
            cfg.knn_k
        )));
    }

    let (lo, hi) = off_diagonal_range(d);
    if hi - lo < 1e-12 {
        log::warn!("all pairwise distances equal; embedding the distances directly");
        let target = d.matrix().clone();
        let (coords, stress) = mds_refined(&target, cfg, exec);
        return Ok(EmbeddingResult {
            coords,
            t: 0,
            degenerate: true,
            stress,
        });
    }

    let p = diffusion_operator(d, cfg.knn_k, exec);
    let t = match cfg.t {
        DiffusionTime::Fixed(t) => t,
        DiffusionTime::Auto => entropy_knee(d, cfg.knn_k, exec),
    };
    let pt = p.pow(t, exec);
    let potential = Matrix::from_vec(n, n, pt.as_slice().iter().map(|x| -x.max(LOG_FLOOR).ln()).collect());
    let rows = exec.map_range(n, |i| {
        (0..n)
            .map(|j| euclid(potential.row(i), potential.row(j)))
            .collect::<Vec<_>>()
    });
    let u = Matrix::from_vec(n, n, rows.into_iter().flatten().collect());
    let (coords, stress) = mds_refined(&u, cfg, exec);
    Ok(EmbeddingResult {
        coords,
        t,
        degenerate: false,
        stress,
    })
}

fn off_diagonal_range(d: &DistanceMatrix) -> (f64, f64) {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                lo = lo.min(d.get(i, j));
                hi = hi.max(d.get(i, j));
            }
        }
    }
    (lo, hi)
}

fn bandwidths(d: &DistanceMatrix, knn_k: usize) -> Vec<f64> {
    (0..d.len())
        .map(|i| {
            let nn = nearest_of(d, i, knn_k);
            d.get(i, nn[knn_k - 1]).max(SIGMA_FLOOR)
        })
        .collect()
}

fn affinity(d: &DistanceMatrix, knn_k: usize, exec: Exec) -> Matrix {
    let n = d.len();
    let sigma = bandwidths(d, knn_k);
    let rows = exec.map_range(n, |i| {
        (0..n)
            .map(|j| {
                let x = d.get(i, j);
                0.5 * (-(x / sigma[i]).powi(2)).exp() + 0.5 * (-(x / sigma[j]).powi(2)).exp()
            })
            .collect::<Vec<_>>()
    });
    Matrix::from_vec(n, n, rows.into_iter().flatten().collect())
}

/// Row-stochastic diffusion operator built from the adaptive-bandwidth kernel.
pub fn diffusion_operator(d: &DistanceMatrix, knn_k: usize, exec: Exec) -> Matrix {
    let mut p = affinity(d, knn_k, exec);
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    p
}

/// Von Neumann entropy of the diffusion spectrum for `t = 1..=max_t`.
pub fn von_neumann_entropy(d: &DistanceMatrix, knn_k: usize, max_t: u32, exec: Exec) -> Vec<f64> {
    let k = affinity(d, knn_k, exec);
    let n = k.rows();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / k.row(i).iter().sum::<f64>().sqrt()).collect();
    let a = Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * k[(i, j)] * inv_sqrt[j]);
    let eig: Vec<f64> = symmetric_eigen(&a).values.into_iter().map(f64::abs).collect();
    (1..=max_t)
        .map(|t| {
            let powered: Vec<f64> = eig.iter().map(|x| x.powi(t as i32)).collect();
            let total: f64 = powered.iter().sum();
            powered
                .iter()
                .map(|x| x / total)
                .filter(|&p| p > 0.0)
                .map(|p| -p * p.ln())
                .sum()
        })
        .collect()
}

/// Diffusion time at the knee of the entropy curve: the point farthest from
/// the chord joining its endpoints.
pub fn entropy_knee(d: &DistanceMatrix, knn_k: usize, exec: Exec) -> u32 {
    let h = von_neumann_entropy(d, knn_k, MAX_AUTO_T, exec);
    let last = h.len() - 1;
    let (x0, y0, x1, y1) = (0.0, h[0], last as f64, h[last]);
    let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &y) in h.iter().enumerate() {
        let dist = ((y1 - y0) * i as f64 - (x1 - x0) * y + x1 * y0 - y1 * x0).abs() / len;
        if dist > best.1 + 1e-15 {
            best = (i, dist);
        }
    }
    best.0 as u32 + 1
}

/// Classical MDS: top eigenvectors of `-J D² J / 2`, signs fixed so each
/// axis has its largest-magnitude entry positive.
pub fn classical_mds(target: &Matrix, out_dim: usize) -> Matrix {
    let n = target.rows();
    let sq = Matrix::from_vec(n, n, target.as_slice().iter().map(|x| x * x).collect());
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let b = Matrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand));
    let eig = symmetric_eigen(&b);
    let mut coords = Matrix::zeros(n, out_dim);
    for axis in 0..out_dim.min(n) {
        let col = n - 1 - axis;
        let scale = eig.values[col].max(0.0).sqrt();
        let mut pivot = 0;
        for i in 1..n {
            if eig.vectors[(i, col)].abs() > eig.vectors[(pivot, col)].abs() + 1e-12 {
                pivot = i;
            }
        }
        let sign = if eig.vectors[(pivot, col)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[(i, axis)] = sign * scale * eig.vectors[(i, col)];
        }
    }
    coords
}

fn mds_refined(target: &Matrix, cfg: &EmbedConfig, exec: Exec) -> (Matrix, f64) {
    let mut x = classical_mds(target, cfg.out_dim);
    let scale = target.as_slice().iter().fold(0.0f64, |m, v| m.max(*v));
    if cfg.stress_iters == 0 || scale == 0.0 {
        return (x.clone(), stress(&x, target));
    }
    let n = target.rows();
    let dim = cfg.out_dim;
    let goal = Matrix::from_vec(n, n, target.as_slice().iter().map(|v| v / scale).collect());
    x = Matrix::from_vec(n, dim, x.as_slice().iter().map(|v| v / scale).collect());
    for iter in 0..cfg.stress_iters {
        let grads = exec.map_range(n, |i| {
            let mut g = vec![0.0; dim];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dist = euclid(x.row(i), x.row(j));
                let want = goal[(i, j)];
                if dist < 1e-12 {
                    if want > 1e-12 {
                        let dir = coincident_direction(cfg.seed, iter, i.min(j), i.max(j), dim);
                        let sign = if i < j { -1.0 } else { 1.0 };
                        g.iter_mut().zip(&dir).for_each(|(gk, d)| *gk += sign * want * d);
                    }
                    continue;
                }
                let coef = 2.0 * (dist - want) / dist;
                for (k, gk) in g.iter_mut().enumerate() {
                    *gk += coef * (x[(i, k)] - x[(j, k)]);
                }
            }
            g
        });
        for (i, g) in grads.iter().enumerate() {
            for (k, gk) in g.iter().enumerate() {
                x[(i, k)] -= cfg.step * gk / n as f64;
            }
        }
    }
    let x = Matrix::from_vec(n, dim, x.as_slice().iter().map(|v| v * scale).collect());
    let s = stress(&x, target);
    (x, s)
}

/// Seeded unit direction used to separate points that coincide but should not.
fn coincident_direction(seed: u64, iter: usize, i: usize, j: usize, dim: usize) -> Vec<f64> {
    let stream = derive_seed(derive_seed(seed, iter as u64), (i as u64) << 32 | j as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

/// Kruskal stress-1 of embedded distances against the target.
fn stress(x: &Matrix, target: &Matrix) -> f64 {
    let n = target.rows();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let e = euclid(x.row(i), x.row(j)) - target[(i, j)];
            num += e * e;
            den += target[(i, j)] * target[(i, j)];
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-point metadata carried into exports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointMeta {
    pub leaf: usize,
    pub chunk: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingExport {
    pub csv: String,
    pub svg: String,
}

impl EmbeddingExport {
    pub fn write(&self, csv_path: &Path, svg_path: &Path) -> Result<()> {
        std::fs::write(csv_path, &self.csv).map_err(|e| Error::io(csv_path, e))?;
        std::fs::write(svg_path, &self.svg).map_err(|e| Error::io(svg_path, e))
    }
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const SVG_PAD: f64 = 24.0;

/// Renders the embedding as CSV and SVG. With an author, each point also
/// carries that author's topic mass on the leaf, which scales the marker.
pub fn export_embedding(
    result: &EmbeddingResult,
    meta: &[PointMeta],
    psis: Option<&[AuthorTopicDist]>,
    author: Option<&str>,
) -> Result<EmbeddingExport> {
    let n = result.len();
    if meta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: meta.len(),
        });
    }
    let mass: Option<&[f64]> = match author {
        None => None,
        Some(name) => {
            let psi = psis
                .unwrap_or(&[])
                .iter()
                .find(|a| a.author == name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown author {name:?}")))?;
            if psi.psi.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: psi.psi.len(),
                });
            }
            Some(&psi.psi)
        }
    };

    let dim = result.coords.cols();
    let mut csv = String::new();
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    csv.push_str("leaf");
    if dim == 2 {
        csv.push_str(",x,y");
    } else {
        (0..dim).for_each(|k| write!(csv, ",c{k}").unwrap());
    }
    csv.push_str(",chunk,meta");
    if let Some(name) = author {
        write!(csv, ",mass:{name}").unwrap();
    }
    csv.push('\n');
    for (i, m) in meta.iter().enumerate() {
        write!(csv, "{}", m.leaf).unwrap();
        for v in result.coords.row(i) {
            write!(csv, ",{v}").unwrap();
        }
        write!(csv, ",{},{}", m.chunk, m.label).unwrap();
        if let Some(mass) = mass {
            write!(csv, ",{}", mass[i]).unwrap();
        }
        csv.push('\n');
    }

    let svg = render_svg(result, meta, mass);
    Ok(EmbeddingExport { csv, svg })
}

fn render_svg(result: &EmbeddingResult, meta: &[PointMeta], mass: Option<&[f64]>) -> String {
    let n = result.len();
    let coord = |i: usize, k: usize| {
        if k < result.coords.cols() {
            result.coords[(i, k)]
        } else {
            0.0
        }
    };
    let bounds = |k: usize| {
        (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(coord(i, k)), hi.max(coord(i, k)))
        })
    };
    let (x_lo, x_hi) = bounds(0);
    let (y_lo, y_hi) = bounds(1);
    let span = (x_hi - x_lo).max(y_hi - y_lo).max(1e-12);
    let scale = ((SVG_W - 2.0 * SVG_PAD).min(SVG_H - 2.0 * SVG_PAD)) / span;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<g id="points">"#).unwrap();
    for (i, m) in meta.iter().enumerate() {
        let cx = SVG_PAD + (coord(i, 0) - x_lo) * scale;
        let cy = SVG_H - SVG_PAD - (coord(i, 1) - y_lo) * scale;
        let r = match mass {
            Some(mass) => 2.0 + 10.0 * mass[i].clamp(0.0, 1.0).sqrt(),
            None => 4.0,
        };
        writeln!(
            svg,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{r:.3}" fill="{}" fill-opacity="0.8" data-leaf="{}" data-chunk="{}" data-meta="{}"/>"#,
            PALETTE[m.label % PALETTE.len()],
            m.leaf,
            m.chunk,
            m.label
        )
        .unwrap();
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}
