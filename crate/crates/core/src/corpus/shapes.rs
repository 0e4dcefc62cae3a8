//! Seeded synthetic shape masks for desk-scale tokenizer training.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;

/// Inner radius of a ring relative to its outer radius.
pub const RING_INNER: f64 = 0.55;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
    Triangle,
    Union,
    Ring,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Rectangle,
        ShapeKind::Ellipse,
        ShapeKind::Triangle,
        ShapeKind::Union,
        ShapeKind::Ring,
    ];
}

/// Relative frequency of each shape kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeMix {
    pub rectangle: f64,
    pub ellipse: f64,
    pub triangle: f64,
    pub union: f64,
    pub ring: f64,
}

impl Default for ShapeMix {
    fn default() -> Self {
        ShapeMix {
            rectangle: 1.0,
            ellipse: 1.0,
            triangle: 1.0,
            union: 1.0,
            ring: 1.0,
        }
    }
}

impl ShapeMix {
    pub fn only(kind: ShapeKind) -> Self {
        let mut m = ShapeMix {
            rectangle: 0.0,
            ellipse: 0.0,
            triangle: 0.0,
            union: 0.0,
            ring: 0.0,
        };
        *m.weight_mut(kind) = 1.0;
        m
    }

    pub fn weight(&self, kind: ShapeKind) -> f64 {
        match kind {
            ShapeKind::Rectangle => self.rectangle,
            ShapeKind::Ellipse => self.ellipse,
            ShapeKind::Triangle => self.triangle,
            ShapeKind::Union => self.union,
            ShapeKind::Ring => self.ring,
        }
    }

    fn weight_mut(&mut self, kind: ShapeKind) -> &mut f64 {
        match kind {
            ShapeKind::Rectangle => &mut self.rectangle,
            ShapeKind::Ellipse => &mut self.ellipse,
            ShapeKind::Triangle => &mut self.triangle,
            ShapeKind::Union => &mut self.union,
            ShapeKind::Ring => &mut self.ring,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeGenConfig {
    pub count: usize,
    pub grid_size: usize,
    pub mix: ShapeMix,
    /// Smallest shape extent as a fraction of the grid side.
    pub min_size: f64,
    /// Largest shape extent as a fraction of the grid side.
    pub max_size: f64,
    pub seed: u64,
}

impl Default for ShapeGenConfig {
    fn default() -> Self {
        ShapeGenConfig {
            count: 10_000,
            grid_size: 32,
            mix: ShapeMix::default(),
            min_size: 0.5,
            max_size: 0.9,
            seed: 0,
        }
    }
}

impl ShapeGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTrainConfig(format!("shape generator: {m}")));
        if self.grid_size < 4 {
            return bad("grid_size must be at least 4");
        }
        let w: Vec<f64> = ShapeKind::ALL.iter().map(|&k| self.mix.weight(k)).collect();
        if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || w.iter().all(|&x| x == 0.0) {
            return bad("mix weights must be non-negative with at least one positive");
        }
        if !(self.min_size > 0.0 && self.min_size <= self.max_size && self.max_size <= 1.0) {
            return bad("sizes must satisfy 0 < min_size <= max_size <= 1");
        }
        Ok(())
    }
}

/// `cfg.count` non-empty masks of side `cfg.grid_size`, identical for
/// identical configs.
pub fn gen_synthetic(cfg: &ShapeGenConfig) -> Result<Vec<Mask>> {
    Ok(gen_synthetic_labeled(cfg)?.into_iter().map(|(_, m)| m).collect())
}

/// Like [`gen_synthetic`], with the kind drawn for each mask.
pub fn gen_synthetic_labeled(cfg: &ShapeGenConfig) -> Result<Vec<(ShapeKind, Mask)>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights: Vec<f64> = ShapeKind::ALL.iter().map(|&k| cfg.mix.weight(k)).collect();
    let pick = WeightedIndex::new(&weights).expect("validated weights");
    let mut out = Vec::with_capacity(cfg.count);
    while out.len() < cfg.count {
        let kind = ShapeKind::ALL[pick.sample(&mut rng)];
        let m = draw(kind, cfg, &mut rng)?;
        if !m.is_empty() {
            out.push((kind, m));
        }
    }
    Ok(out)
}

fn extent(cfg: &ShapeGenConfig, rng: &mut impl Rng) -> f64 {
    rng.random_range(cfg.min_size..=cfg.max_size) * cfg.grid_size as f64
}

fn draw(kind: ShapeKind, cfg: &ShapeGenConfig, rng: &mut impl Rng) -> Result<Mask> {
    let n = cfg.grid_size;
    match kind {
        ShapeKind::Rectangle => {
            let w = (extent(cfg, rng).round() as usize).clamp(1, n);
            let h = (extent(cfg, rng).round() as usize).clamp(1, n);
            let x0 = rng.random_range(0..=n - w);
            let y0 = rng.random_range(0..=n - h);
            Mask::from_fn(n, n, |x, y| x >= x0 && x < x0 + w && y >= y0 && y < y0 + h)
        }
        ShapeKind::Ellipse => {
            let e = Ellipse::random(cfg, rng);
            Mask::from_fn(n, n, |x, y| e.contains(x, y, 1.0))
        }
        ShapeKind::Triangle => {
            let t = Triangle::random(cfg, rng);
            Mask::from_fn(n, n, |x, y| t.contains(x, y))
        }
        ShapeKind::Ring => {
            let e = Ellipse::random(cfg, rng);
            let inner = RING_INNER;
            Mask::from_fn(n, n, |x, y| e.contains(x, y, 1.0) && !e.contains(x, y, inner))
        }
        ShapeKind::Union => {
            let a = draw_primitive(cfg, rng)?;
            let b = draw_primitive(cfg, rng)?;
            a.union(&b)
        }
    }
}

fn draw_primitive(cfg: &ShapeGenConfig, rng: &mut impl Rng) -> Result<Mask> {
    let kind = [ShapeKind::Rectangle, ShapeKind::Ellipse, ShapeKind::Triangle][rng.random_range(0..3)];
    draw(kind, &ShapeGenConfig { max_size: cfg.max_size * 0.75, min_size: cfg.min_size.min(cfg.max_size * 0.75), ..cfg.clone() }, rng)
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn random(cfg: &ShapeGenConfig, rng: &mut impl Rng) -> Self {
        let n = cfg.grid_size as f64;
        let rx = extent(cfg, rng) / 2.0;
        let ry = extent(cfg, rng) / 2.0;
        let r = rx.max(ry);
        let margin = r.min(n / 2.0);
        let cx = rng.random_range(margin..=n - margin);
        let cy = rng.random_range(margin..=n - margin);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        Ellipse {
            cx,
            cy,
            rx,
            ry,
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    /// Pixel-centre test against the ellipse scaled by `scale`.
    fn contains(&self, x: usize, y: usize, scale: f64) -> bool {
        let dx = x as f64 + 0.5 - self.cx;
        let dy = y as f64 + 0.5 - self.cy;
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        let (a, b) = (self.rx * scale, self.ry * scale);
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    }
}

struct Triangle([(f64, f64); 3]);

impl Triangle {
    /// Base along one side of a random box, apex on the opposite side.
    fn random(cfg: &ShapeGenConfig, rng: &mut impl Rng) -> Self {
        let n = cfg.grid_size as f64;
        let w = extent(cfg, rng);
        let h = extent(cfg, rng);
        let x0 = rng.random_range(0.0..=n - w);
        let y0 = rng.random_range(0.0..=n - h);
        let t = rng.random_range(0.0..=1.0);
        let (x1, y1) = (x0 + w, y0 + h);
        let v = match rng.random_range(0..4) {
            0 => [(x0, y1), (x1, y1), (x0 + t * w, y0)],
            1 => [(x0, y0), (x1, y0), (x0 + t * w, y1)],
            2 => [(x0, y0), (x0, y1), (x1, y0 + t * h)],
            _ => [(x1, y0), (x1, y1), (x0, y0 + t * h)],
        };
        Triangle(v)
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let [a, b, c] = self.0;
        let cross = |p: (f64, f64), q: (f64, f64)| (q.0 - p.0) * (py - p.1) - (q.1 - p.1) * (px - p.0);
        let (d1, d2, d3) = (cross(a, b), cross(b, c), cross(c, a));
        let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
        let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
        !(neg && pos)
    }
}
