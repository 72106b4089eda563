//! Exact t-SNE projection with per-class centroids and 2σ ellipses.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::code::GardinerCode;
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub x: f64,
    pub y: f64,
    pub code: GardinerCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// Semi-axes at two standard deviations.
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Angle of the major axis, radians from +x.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub code: GardinerCode,
    pub count: usize,
    pub centroid: [f64; 2],
    /// Only for classes with at least 3 points.
    pub ellipse: Option<Ellipse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMap {
    pub points: Vec<MapPoint>,
    pub classes: Vec<ClassSummary>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Conditional probabilities `p_{j|i}` for one row, matching `ln(perplexity)` entropy.
fn row_affinities(dist: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
    let mut p = vec![0.0; dist.len()];
    for _ in 0..100 {
        let mut sum = 0.0;
        for (j, (pj, &d)) in p.iter_mut().zip(dist).enumerate() {
            *pj = if j == i { 0.0 } else { (-beta * d).exp() };
            sum += *pj;
        }
        let sum = sum.max(1e-300);
        let mut h = 0.0;
        for (pj, &d) in p.iter_mut().zip(dist) {
            h += beta * d * *pj;
            *pj /= sum;
        }
        let h = sum.ln() + h / sum;
        let diff = h - target;
        if diff.abs() < 1e-5 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    p
}

/// Runs exact t-SNE; `O(N²)` memory.
pub fn tsne(data: &[Vec<f64>], config: &TsneConfig) -> Result<Vec<[f64; 2]>> {
    let n = data.len();
    if !(config.perplexity > 0.0) || (n as f64) <= 3.0 * config.perplexity {
        return Err(Error::InvalidInput(format!(
            "t-SNE needs more than 3 × perplexity points ({n} points, perplexity {})",
            config.perplexity
        )));
    }
    let exec = config.exec;
    // Scale-free affinities: distances divided by their mean.
    let dist: Vec<Vec<f64>> = exec.map_range(n, |i| data.iter().map(|b| sq_dist(&data[i], b)).collect());
    let mean = dist.iter().flatten().sum::<f64>() / (n * n) as f64;
    let scale = if mean > 0.0 { 1.0 / mean } else { 1.0 };
    let cond: Vec<Vec<f64>> = exec.map_range(n, |i| {
        let row: Vec<f64> = dist[i].iter().map(|d| d * scale).collect();
        row_affinities(&row, i, config.perplexity)
    });
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid std");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];

    for iter in 0..config.iterations {
        let early = iter < config.exaggeration_iterations;
        let exaggeration = if early { config.early_exaggeration } else { 1.0 };
        let momentum = if early { 0.5 } else { 0.8 };
        let num: Vec<Vec<f64>> = exec.map_range(n, |i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 1.0 / (1.0 + sq_dist(&y[i], &y[j])) })
                .collect()
        });
        let z: f64 = num.iter().flatten().sum::<f64>().max(1e-300);
        let grads: Vec<[f64; 2]> = exec.map_range(n, |i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                let w = (exaggeration * p[i * n + j] - num[i][j] / z) * num[i][j];
                g[0] += 4.0 * w * (y[i][0] - y[j][0]);
                g[1] += 4.0 * w * (y[i][1] - y[j][1]);
            }
            g
        });
        for i in 0..n {
            for k in 0..2 {
                let same_sign = (grads[i][k] > 0.0) == (velocity[i][k] > 0.0);
                gains[i][k] = if same_sign { (gains[i][k] * 0.8f64).max(0.01) } else { gains[i][k] + 0.2 };
                velocity[i][k] = momentum * velocity[i][k] - config.learning_rate * gains[i][k] * grads[i][k];
                y[i][k] += velocity[i][k];
            }
        }
        let cx = y.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        y.iter_mut().for_each(|p| {
            p[0] -= cx;
            p[1] -= cy;
        });
    }
    Ok(y)
}

/// Mean and 2σ ellipse of a point cloud.
pub fn summarize(points: &[[f64; 2]]) -> ([f64; 2], Option<Ellipse>) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    if points.len() < 3 {
        return ([mx, my], None);
    }
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        a += dx * dx;
        b += dx * dy;
        c += dy * dy;
    }
    let (a, b, c) = (a / n, b / n, c / n);
    let mid = (a + c) / 2.0;
    let rad = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    let (l1, l2) = (mid + rad, (mid - rad).max(0.0));
    let ellipse = Ellipse {
        semi_major: 2.0 * l1.sqrt(),
        semi_minor: 2.0 * l2.sqrt(),
        angle: 0.5 * (2.0 * b).atan2(a - c),
    };
    ([mx, my], Some(ellipse))
}

pub fn embedding_map(embeddings: &[Vec<f64>], codes: &[GardinerCode], config: &TsneConfig) -> Result<EmbeddingMap> {
    if embeddings.len() != codes.len() {
        return Err(Error::InvalidInput(format!(
            "{} embeddings for {} codes",
            embeddings.len(),
            codes.len()
        )));
    }
    let coords = tsne(embeddings, config)?;
    let mut by_class: BTreeMap<&GardinerCode, Vec<[f64; 2]>> = BTreeMap::new();
    for (c, p) in codes.iter().zip(&coords) {
        by_class.entry(c).or_default().push(*p);
    }
    let classes = by_class
        .into_iter()
        .map(|(code, pts)| {
            let (centroid, ellipse) = summarize(&pts);
            ClassSummary {
                code: code.clone(),
                count: pts.len(),
                centroid,
                ellipse,
            }
        })
        .collect();
    let points = coords
        .iter()
        .zip(codes)
        .map(|(p, c)| MapPoint {
            x: p[0],
            y: p[1],
            code: c.clone(),
        })
        .collect();
    Ok(EmbeddingMap { points, classes })
}

fn color(i: usize, n: usize) -> String {
    let hue = 360.0 * i as f64 / n.max(1) as f64;
    format!("hsl({hue:.0},70%,45%)")
}

impl EmbeddingMap {
    /// Scatter plot with centroids and ellipses.
    pub fn to_svg(&self, size: u32) -> String {
        let s = f64::from(size);
        let pad = 20.0;
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &self.points {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-12);
        let k = (s - 2.0 * pad) / span;
        let tx = |x: f64| pad + (x - x0) * k;
        let ty = |y: f64| pad + (y - y0) * k;
        let index: BTreeMap<&GardinerCode, usize> = self.classes.iter().enumerate().map(|(i, c)| (&c.code, i)).collect();
        let n = self.classes.len();

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for p in &self.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}"/>"#,
                tx(p.x),
                ty(p.y),
                color(index[&p.code], n)
            );
        }
        for (i, c) in self.classes.iter().enumerate() {
            let (cx, cy) = (tx(c.centroid[0]), ty(c.centroid[1]));
            if let Some(e) = c.ellipse {
                let _ = writeln!(
                    out,
                    r#"<ellipse cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.2} {cx:.2} {cy:.2})" fill="none" stroke="{}"/>"#,
                    e.semi_major * k,
                    e.semi_minor * k,
                    e.angle.to_degrees(),
                    color(i, n)
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{cx:.2}" y="{cy:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                c.code
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
