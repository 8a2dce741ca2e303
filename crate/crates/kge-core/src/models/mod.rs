//! Score functions, their closed-form gradients, and the grouped batch
//! scorer used by joint negative sampling.
//!
//! Supported models and their score f(h, r, t):
//!
//! | kind      | score                                  | relation params |
//! |-----------|----------------------------------------|-----------------|
//! | TransE_L1 | -‖h + r - t‖₁                          | d               |
//! | TransE_L2 | -‖h + r - t‖₂                          | d               |
//! | TransR    | -‖M_r h + r - M_r t‖₂²                 | d·d + d         |
//! | DistMult  | hᵀ diag(r) t                           | d               |
//! | ComplEx   | Real(hᵀ diag(r) t̄)                     | d               |
//! | RESCAL    | hᵀ M_r t                               | d·d             |
//! | RotatE    | -‖h ∘ r - t‖²  (r = e^{iθ})            | d/2             |
//!
//! Complex-valued embeddings (ComplEx, RotatE) store the first d/2 entries
//! as real parts and the last d/2 as imaginary parts. RotatE relations are
//! stored as phase angles θ, so the rotation has unit modulus by
//! construction and needs no projection step.

pub mod kernels;
pub mod loss;

use crate::error::{Error, Result};
use kernels::Metric;

pub use loss::{logistic_loss, ranking_loss};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TransEL1,
    TransEL2,
    TransR,
    DistMult,
    ComplEx,
    Rescal,
    RotatE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::TransEL1,
        ModelKind::TransEL2,
        ModelKind::TransR,
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::Rescal,
        ModelKind::RotatE,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::TransEL1 => "transe_l1",
            ModelKind::TransEL2 => "transe_l2",
            ModelKind::TransR => "transr",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
            ModelKind::Rescal => "rescal",
            ModelKind::RotatE => "rotate",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s.to_ascii_lowercase().as_str() {
            "transe_l1" | "transe-l1" => Some(ModelKind::TransEL1),
            "transe_l2" | "transe-l2" | "transe" => Some(ModelKind::TransEL2),
            "transr" => Some(ModelKind::TransR),
            "distmult" => Some(ModelKind::DistMult),
            "complex" => Some(ModelKind::ComplEx),
            "rescal" => Some(ModelKind::Rescal),
            "rotate" => Some(ModelKind::RotatE),
            _ => None,
        }
    }
}

/// Which side of a positive triplet gets replaced by sampled entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptSide {
    Head,
    Tail,
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Entity embedding width.
    pub dim: usize,
    /// Margin used by the ranking loss and by the initialization bound.
    pub gamma: Option<f32>,
    /// Score RotatE as -‖h∘r-t‖ instead of the squared form.
    pub rotate_unsquared: bool,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if matches!(kind, ModelKind::ComplEx | ModelKind::RotatE) && dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "{} requires an even dim, got {dim}",
                kind.name()
            )));
        }
        Ok(Self {
            kind,
            dim,
            gamma: None,
            rotate_unsquared: false,
        })
    }

    pub fn with_gamma(mut self, gamma: f32) -> Self {
        self.gamma = Some(gamma);
        self
    }

    /// Relation parameter width for this model.
    pub fn rel_dim(&self) -> usize {
        let d = self.dim;
        match self.kind {
            ModelKind::TransEL1 | ModelKind::TransEL2 | ModelKind::DistMult
            | ModelKind::ComplEx => d,
            ModelKind::RotatE => d / 2,
            ModelKind::Rescal => d * d,
            ModelKind::TransR => d * d + d,
        }
    }

    /// Uniform initialization bound: (γ+2)/d when γ is set, else 1/√d.
    pub fn init_bound(&self) -> f32 {
        match self.gamma {
            Some(g) => (g + 2.0) / self.dim as f32,
            None => 1.0 / (self.dim as f32).sqrt(),
        }
    }

    fn check_widths(&self, h: &[f32], r: &[f32], t: &[f32]) -> Result<()> {
        if h.len() != self.dim || t.len() != self.dim || r.len() != self.rel_dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected h/t width {} and r width {}, got {}/{}/{}",
                self.dim,
                self.rel_dim(),
                h.len(),
                r.len(),
                t.len()
            )));
        }
        Ok(())
    }
}

/// Scores for one mini-batch: per-positive scores plus the grouped
/// negative scores laid out positive-major (row i holds the k scores of
/// positive i against its group's negatives).
#[derive(Debug, Clone)]
pub struct ScoreBatch {
    pub pos_scores: Vec<f32>,
    pub neg_scores: Vec<f32>,
    pub negatives_per_positive: usize,
}

fn all_finite(v: &[f32]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Score a single triplet.
pub fn score(cfg: &ModelConfig, h: &[f32], r: &[f32], t: &[f32]) -> Result<f32> {
    cfg.check_widths(h, r, t)?;
    if !all_finite(h) || !all_finite(r) || !all_finite(t) {
        return Err(Error::NonFinite("score input"));
    }
    let d = cfg.dim;
    let m = d / 2;
    Ok(match cfg.kind {
        ModelKind::TransEL1 => {
            let mut s = 0.0;
            for c in 0..d {
                s += (h[c] + r[c] - t[c]).abs();
            }
            -s
        }
        ModelKind::TransEL2 => {
            let mut s = 0.0f32;
            for c in 0..d {
                let e = h[c] + r[c] - t[c];
                s += e * e;
            }
            -s.sqrt()
        }
        ModelKind::TransR => {
            let (mat, rv) = r.split_at(d * d);
            let mut s = 0.0f32;
            for a in 0..d {
                let row = &mat[a * d..(a + 1) * d];
                let p = kernels::dot(row, h) + rv[a] - kernels::dot(row, t);
                s += p * p;
            }
            -s
        }
        ModelKind::DistMult => {
            let mut s = 0.0;
            for c in 0..d {
                s += h[c] * r[c] * t[c];
            }
            s
        }
        ModelKind::ComplEx => {
            let mut s = 0.0;
            for c in 0..m {
                let (hr, hi) = (h[c], h[m + c]);
                let (rr, ri) = (r[c], r[m + c]);
                let (tr, ti) = (t[c], t[m + c]);
                s += (hr * rr - hi * ri) * tr + (hr * ri + hi * rr) * ti;
            }
            s
        }
        ModelKind::Rescal => {
            let mut s = 0.0;
            for a in 0..d {
                s += h[a] * kernels::dot(&r[a * d..(a + 1) * d], t);
            }
            s
        }
        ModelKind::RotatE => {
            let mut s = 0.0f32;
            for c in 0..m {
                let (cs, sn) = (r[c].cos(), r[c].sin());
                let zr = h[c] * cs - h[m + c] * sn - t[c];
                let zi = h[c] * sn + h[m + c] * cs - t[m + c];
                s += zr * zr + zi * zi;
            }
            if cfg.rotate_unsquared {
                -s.sqrt()
            } else {
                -s
            }
        }
    })
}

/// Analytic gradient of `score` scaled by `upstream`.
///
/// Returns (dh, dr, dt). L1 uses subgradient 0 at kinks; the unsquared L2
/// norms guard the denominator with 1e-12.
pub fn score_grad(
    cfg: &ModelConfig,
    h: &[f32],
    r: &[f32],
    t: &[f32],
    upstream: f32,
) -> Result<(Vec<f32>, Vec<f32>, Vec<f32>)> {
    let mut dh = vec![0.0; h.len()];
    let mut dr = vec![0.0; r.len()];
    let mut dt = vec![0.0; t.len()];
    score_grad_into(cfg, h, r, t, upstream, &mut dh, &mut dr, &mut dt)?;
    Ok((dh, dr, dt))
}

/// Like [`score_grad`] but accumulates (+=) into caller buffers.
#[allow(clippy::too_many_arguments)]
pub fn score_grad_into(
    cfg: &ModelConfig,
    h: &[f32],
    r: &[f32],
    t: &[f32],
    upstream: f32,
    dh: &mut [f32],
    dr: &mut [f32],
    dt: &mut [f32],
) -> Result<()> {
    cfg.check_widths(h, r, t)?;
    if !all_finite(h) || !all_finite(r) || !all_finite(t) || !upstream.is_finite() {
        return Err(Error::NonFinite("score_grad input"));
    }
    let d = cfg.dim;
    let m = d / 2;
    let u = upstream;
    match cfg.kind {
        ModelKind::TransEL1 => {
            for c in 0..d {
                let e = h[c] + r[c] - t[c];
                let s = if e > 0.0 {
                    1.0
                } else if e < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                dh[c] -= u * s;
                dr[c] -= u * s;
                dt[c] += u * s;
            }
        }
        ModelKind::TransEL2 => {
            let mut sq = 0.0f32;
            for c in 0..d {
                let e = h[c] + r[c] - t[c];
                sq += e * e;
            }
            let norm = sq.sqrt().max(1e-12);
            for c in 0..d {
                let g = (h[c] + r[c] - t[c]) / norm;
                dh[c] -= u * g;
                dr[c] -= u * g;
                dt[c] += u * g;
            }
        }
        ModelKind::TransR => {
            let (mat, _) = r.split_at(d * d);
            // p = M h + r - M t; f = -|p|^2
            let mut p = vec![0.0f32; d];
            for a in 0..d {
                let row = &mat[a * d..(a + 1) * d];
                p[a] = kernels::dot(row, h) + r[d * d + a] - kernels::dot(row, t);
            }
            let (dmat, drv) = dr.split_at_mut(d * d);
            for a in 0..d {
                let dp = -2.0 * p[a] * u;
                drv[a] += dp;
                let row = &mat[a * d..(a + 1) * d];
                let drow = &mut dmat[a * d..(a + 1) * d];
                for c in 0..d {
                    dh[c] += dp * row[c];
                    dt[c] -= dp * row[c];
                    drow[c] += dp * (h[c] - t[c]);
                }
            }
        }
        ModelKind::DistMult => {
            for c in 0..d {
                dh[c] += u * r[c] * t[c];
                dr[c] += u * h[c] * t[c];
                dt[c] += u * h[c] * r[c];
            }
        }
        ModelKind::ComplEx => {
            for c in 0..m {
                let (hr, hi) = (h[c], h[m + c]);
                let (rr, ri) = (r[c], r[m + c]);
                let (tr, ti) = (t[c], t[m + c]);
                dh[c] += u * (rr * tr + ri * ti);
                dh[m + c] += u * (rr * ti - ri * tr);
                dr[c] += u * (hr * tr + hi * ti);
                dr[m + c] += u * (hr * ti - hi * tr);
                dt[c] += u * (hr * rr - hi * ri);
                dt[m + c] += u * (hr * ri + hi * rr);
            }
        }
        ModelKind::Rescal => {
            for a in 0..d {
                let row = &r[a * d..(a + 1) * d];
                let drow = &mut dr[a * d..(a + 1) * d];
                let mut mt = 0.0;
                for c in 0..d {
                    mt += row[c] * t[c];
                    dt[c] += u * h[a] * row[c];
                    drow[c] += u * h[a] * t[c];
                }
                dh[a] += u * mt;
            }
        }
        ModelKind::RotatE => {
            let mut z = vec![0.0f32; d];
            let mut sq = 0.0f32;
            for c in 0..m {
                let (cs, sn) = (r[c].cos(), r[c].sin());
                let zr = h[c] * cs - h[m + c] * sn - t[c];
                let zi = h[c] * sn + h[m + c] * cs - t[m + c];
                z[c] = zr;
                z[m + c] = zi;
                sq += zr * zr + zi * zi;
            }
            // df/dz for the squared form is -2z; the unsquared form divides
            // by the norm.
            let scale = if cfg.rotate_unsquared {
                -1.0 / sq.sqrt().max(1e-12)
            } else {
                -2.0
            };
            for c in 0..m {
                let (cs, sn) = (r[c].cos(), r[c].sin());
                let dzr = scale * z[c] * u;
                let dzi = scale * z[m + c] * u;
                dh[c] += dzr * cs + dzi * sn;
                dh[m + c] += -dzr * sn + dzi * cs;
                dr[c] += dzr * (-h[c] * sn - h[m + c] * cs) + dzi * (h[c] * cs - h[m + c] * sn);
                dt[c] -= dzr;
                dt[m + c] -= dzi;
            }
        }
    }
    Ok(())
}

/// Per-model default margin, used when the caller sets none. Distance
/// models want genuine ranking headroom; for the dot family the margin
/// only feeds the initialization bound (γ+2)/d, where a wider init is
/// what works in practice.
pub fn default_gamma(kind: ModelKind) -> f32 {
    match kind {
        ModelKind::TransEL1 | ModelKind::TransEL2 => 20.0,
        ModelKind::TransR | ModelKind::RotatE => 12.0,
        ModelKind::DistMult | ModelKind::ComplEx | ModelKind::Rescal => 143.0,
    }
}

/// Margin headroom added to scores before the logistic loss.
///
/// Distance-family scores are nonpositive, so an unshifted logistic loss
/// never stops pulling already-satisfied positives and barely pushes
/// distant negatives; embeddings collapse. Shifting by the margin gives
/// the loss a finite operating point. A constant shift cannot change any
/// ranking, so evaluation always sees the raw Table-style scores. Dot
/// family scores are unbounded in both directions and need no shift.
pub fn logistic_margin(cfg: &ModelConfig) -> f32 {
    match cfg.kind {
        ModelKind::TransEL1
        | ModelKind::TransEL2
        | ModelKind::TransR
        | ModelKind::RotatE => cfg.gamma.unwrap_or(0.0),
        ModelKind::DistMult | ModelKind::ComplEx | ModelKind::Rescal => 0.0,
    }
}

/// The metric used by a distance-family kind, or None for the dot family.
fn distance_metric(cfg: &ModelConfig) -> Option<Metric> {
    match cfg.kind {
        ModelKind::TransEL1 => Some(Metric::L1),
        ModelKind::TransEL2 => Some(Metric::L2),
        ModelKind::RotatE => Some(if cfg.rotate_unsquared {
            Metric::L2
        } else {
            Metric::L2Sq
        }),
        _ => None,
    }
}

/// Build the per-positive combination vector o_i from the non-corrupted
/// side and the relation, such that scoring a negative n reduces to either
/// dot(o, n) or -distance(o, n).
///
/// For Tail mode `side` holds head embeddings; for Head mode it holds tail
/// embeddings. Output is g×d.
pub fn combine(
    cfg: &ModelConfig,
    side: &[f32],
    rels: &[f32],
    mode: CorruptSide,
) -> Result<Vec<f32>> {
    let d = cfg.dim;
    let rd = cfg.rel_dim();
    if side.len() % d != 0 || rels.len() % rd != 0 || side.len() / d != rels.len() / rd {
        return Err(Error::ShapeMismatch(format!(
            "combine: side len {} rels len {} for d={d} rel_dim={rd}",
            side.len(),
            rels.len()
        )));
    }
    let g = side.len() / d;
    let m = d / 2;
    let mut o = vec![0.0f32; g * d];
    for i in 0..g {
        let s = &side[i * d..(i + 1) * d];
        let r = &rels[i * rd..(i + 1) * rd];
        let oi = &mut o[i * d..(i + 1) * d];
        match (cfg.kind, mode) {
            (ModelKind::TransEL1 | ModelKind::TransEL2, CorruptSide::Tail) => {
                for c in 0..d {
                    oi[c] = s[c] + r[c];
                }
            }
            (ModelKind::TransEL1 | ModelKind::TransEL2, CorruptSide::Head) => {
                for c in 0..d {
                    oi[c] = s[c] - r[c];
                }
            }
            (ModelKind::DistMult, _) => {
                for c in 0..d {
                    oi[c] = s[c] * r[c];
                }
            }
            (ModelKind::ComplEx, CorruptSide::Tail) => {
                // o = h * r ; score = Re(o · conj(t')) = o_re·t_re + o_im·t_im
                for c in 0..m {
                    oi[c] = s[c] * r[c] - s[m + c] * r[m + c];
                    oi[m + c] = s[c] * r[m + c] + s[m + c] * r[c];
                }
            }
            (ModelKind::ComplEx, CorruptSide::Head) => {
                // score as a function of h' is h'_re·A + h'_im·B
                for c in 0..m {
                    oi[c] = r[c] * s[c] + r[m + c] * s[m + c];
                    oi[m + c] = r[c] * s[m + c] - r[m + c] * s[c];
                }
            }
            (ModelKind::Rescal, CorruptSide::Tail) => {
                // o = Mᵀ h
                for a in 0..d {
                    let row = &r[a * d..(a + 1) * d];
                    for c in 0..d {
                        oi[c] += s[a] * row[c];
                    }
                }
            }
            (ModelKind::Rescal, CorruptSide::Head) => {
                // o = M t
                for a in 0..d {
                    oi[a] = kernels::dot(&r[a * d..(a + 1) * d], s);
                }
            }
            (ModelKind::RotatE, CorruptSide::Tail) => {
                // o = h ∘ r
                for c in 0..m {
                    let (cs, sn) = (r[c].cos(), r[c].sin());
                    oi[c] = s[c] * cs - s[m + c] * sn;
                    oi[m + c] = s[c] * sn + s[m + c] * cs;
                }
            }
            (ModelKind::RotatE, CorruptSide::Head) => {
                // ‖h∘r-t‖ = ‖h - t∘conj(r)‖ because |r|=1, so o = t∘conj(r)
                for c in 0..m {
                    let (cs, sn) = (r[c].cos(), r[c].sin());
                    oi[c] = s[c] * cs + s[m + c] * sn;
                    oi[m + c] = -s[c] * sn + s[m + c] * cs;
                }
            }
            (ModelKind::TransR, _) => {
                return Err(Error::ShapeMismatch(
                    "TransR has no shared combination vector".into(),
                ))
            }
        }
    }
    Ok(o)
}

/// Score one corruption group: g positives sharing k sampled entities.
///
/// `side` is the non-corrupted side (g×d), `rels` the g relation parameter
/// rows, `negs` the k sampled entity embeddings (k×d). `out` receives g×k
/// scores, row-major. Equal (within 1e-5) to scoring each of the g·k pairs
/// with [`score`].
pub fn score_group(
    cfg: &ModelConfig,
    side: &[f32],
    rels: &[f32],
    negs: &[f32],
    mode: CorruptSide,
    out: &mut [f32],
) -> Result<()> {
    let d = cfg.dim;
    if negs.len() % d != 0 {
        return Err(Error::ShapeMismatch("negs width".into()));
    }
    let k = negs.len() / d;
    let g = side.len() / d;
    if out.len() != g * k {
        return Err(Error::ShapeMismatch(format!(
            "out len {} != g*k = {}",
            out.len(),
            g * k
        )));
    }
    if cfg.kind == ModelKind::TransR {
        return transr_score_group(cfg, side, rels, negs, mode, out);
    }
    let o = combine(cfg, side, rels, mode)?;
    match distance_metric(cfg) {
        Some(metric) => kernels::distance_scores(metric, &o, negs, d, out),
        None => kernels::dot_scores(&o, negs, d, out),
    }
    Ok(())
}

/// Gradients of a grouped score block, accumulated into caller buffers.
///
/// `upstream` and `scores` are g×k (the latter is the forward output of
/// [`score_group`]). Accumulates into `d_side` (g×d), `d_rels`
/// (g×rel_dim), and `d_negs` (k×d).
#[allow(clippy::too_many_arguments)]
pub fn score_group_grad(
    cfg: &ModelConfig,
    side: &[f32],
    rels: &[f32],
    negs: &[f32],
    mode: CorruptSide,
    upstream: &[f32],
    scores: &[f32],
    d_side: &mut [f32],
    d_rels: &mut [f32],
    d_negs: &mut [f32],
) -> Result<()> {
    let d = cfg.dim;
    let rd = cfg.rel_dim();
    let g = side.len() / d;
    let k = negs.len() / d;
    if upstream.len() != g * k || scores.len() != g * k {
        return Err(Error::ShapeMismatch("upstream/scores".into()));
    }
    if d_side.len() != side.len() || d_rels.len() != rels.len() || d_negs.len() != negs.len() {
        return Err(Error::ShapeMismatch("gradient buffers".into()));
    }
    if cfg.kind == ModelKind::TransR {
        return transr_group_grad(cfg, side, rels, negs, mode, upstream, d_side, d_rels, d_negs);
    }

    let o = combine(cfg, side, rels, mode)?;
    let mut d_o = vec![0.0f32; o.len()];
    match distance_metric(cfg) {
        Some(metric) => {
            kernels::distance_grads(metric, &o, negs, d, upstream, scores, &mut d_o, d_negs);
        }
        None => {
            kernels::dot_grad_o(upstream, negs, d, &mut d_o);
            kernels::dot_grad_negs(upstream, &o, d, d_negs);
        }
    }

    // Chain d_o back through the combination.
    let m = d / 2;
    for i in 0..g {
        let s = &side[i * d..(i + 1) * d];
        let r = &rels[i * rd..(i + 1) * rd];
        let doi = &d_o[i * d..(i + 1) * d];
        let oi = &o[i * d..(i + 1) * d];
        let ds = &mut d_side[i * d..(i + 1) * d];
        let dr = &mut d_rels[i * rd..(i + 1) * rd];
        match (cfg.kind, mode) {
            (ModelKind::TransEL1 | ModelKind::TransEL2, CorruptSide::Tail) => {
                for c in 0..d {
                    ds[c] += doi[c];
                    dr[c] += doi[c];
                }
            }
            (ModelKind::TransEL1 | ModelKind::TransEL2, CorruptSide::Head) => {
                for c in 0..d {
                    ds[c] += doi[c];
                    dr[c] -= doi[c];
                }
            }
            (ModelKind::DistMult, _) => {
                for c in 0..d {
                    ds[c] += doi[c] * r[c];
                    dr[c] += doi[c] * s[c];
                }
            }
            (ModelKind::ComplEx, CorruptSide::Tail) => {
                for c in 0..m {
                    let (dc, dd) = (doi[c], doi[m + c]);
                    ds[c] += dc * r[c] + dd * r[m + c];
                    ds[m + c] += -dc * r[m + c] + dd * r[c];
                    dr[c] += dc * s[c] + dd * s[m + c];
                    dr[m + c] += -dc * s[m + c] + dd * s[c];
                }
            }
            (ModelKind::ComplEx, CorruptSide::Head) => {
                for c in 0..m {
                    let (da, db) = (doi[c], doi[m + c]);
                    ds[c] += da * r[c] - db * r[m + c];
                    ds[m + c] += da * r[m + c] + db * r[c];
                    dr[c] += da * s[c] + db * s[m + c];
                    dr[m + c] += da * s[m + c] - db * s[c];
                }
            }
            (ModelKind::Rescal, CorruptSide::Tail) => {
                for a in 0..d {
                    let row = &r[a * d..(a + 1) * d];
                    let drow = &mut dr[a * d..(a + 1) * d];
                    let mut acc = 0.0;
                    for c in 0..d {
                        acc += row[c] * doi[c];
                        drow[c] += s[a] * doi[c];
                    }
                    ds[a] += acc;
                }
            }
            (ModelKind::Rescal, CorruptSide::Head) => {
                for a in 0..d {
                    let row = &r[a * d..(a + 1) * d];
                    let drow = &mut dr[a * d..(a + 1) * d];
                    for c in 0..d {
                        ds[c] += row[c] * doi[a];
                        drow[c] += doi[a] * s[c];
                    }
                }
            }
            (ModelKind::RotatE, CorruptSide::Tail) => {
                for c in 0..m {
                    let (cs, sn) = (r[c].cos(), r[c].sin());
                    let (dre, dim) = (doi[c], doi[m + c]);
                    ds[c] += dre * cs + dim * sn;
                    ds[m + c] += -dre * sn + dim * cs;
                    dr[c] += -dre * oi[m + c] + dim * oi[c];
                }
            }
            (ModelKind::RotatE, CorruptSide::Head) => {
                for c in 0..m {
                    let (cs, sn) = (r[c].cos(), r[c].sin());
                    let (dre, dim) = (doi[c], doi[m + c]);
                    ds[c] += dre * cs - dim * sn;
                    ds[m + c] += dre * sn + dim * cs;
                    dr[c] += dre * oi[m + c] - dim * oi[c];
                }
            }
            (ModelKind::TransR, _) => unreachable!(),
        }
    }
    Ok(())
}

/// TransR scores every pair through the group relation's projection, so
/// negatives cannot be pre-combined; each row projects the negatives with
/// its own M_r.
fn transr_score_group(
    cfg: &ModelConfig,
    side: &[f32],
    rels: &[f32],
    negs: &[f32],
    mode: CorruptSide,
    out: &mut [f32],
) -> Result<()> {
    let d = cfg.dim;
    let rd = cfg.rel_dim();
    let g = side.len() / d;
    let k = negs.len() / d;
    if rels.len() != g * rd {
        return Err(Error::ShapeMismatch("transr rels".into()));
    }
    let mut proj = vec![0.0f32; d];
    let mut o = vec![0.0f32; d];
    for i in 0..g {
        let s = &side[i * d..(i + 1) * d];
        let r = &rels[i * rd..(i + 1) * rd];
        let (mat, rv) = r.split_at(d * d);
        // o = M s + r (tail mode) or M s - r (head mode): the sign on the
        // residual flips but distances are symmetric, so fold it into o.
        for a in 0..d {
            let ms = kernels::dot(&mat[a * d..(a + 1) * d], s);
            o[a] = match mode {
                CorruptSide::Tail => ms + rv[a],
                CorruptSide::Head => ms - rv[a],
            };
        }
        for j in 0..k {
            let n = &negs[j * d..(j + 1) * d];
            for a in 0..d {
                proj[a] = kernels::dot(&mat[a * d..(a + 1) * d], n);
            }
            out[i * k + j] = -kernels::l2sq_distance(&o, &proj);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn transr_group_grad(
    cfg: &ModelConfig,
    side: &[f32],
    rels: &[f32],
    negs: &[f32],
    mode: CorruptSide,
    upstream: &[f32],
    d_side: &mut [f32],
    d_rels: &mut [f32],
    d_negs: &mut [f32],
) -> Result<()> {
    let d = cfg.dim;
    let rd = cfg.rel_dim();
    let g = side.len() / d;
    let k = negs.len() / d;
    let mut o = vec![0.0f32; d];
    let mut proj = vec![0.0f32; d];
    for i in 0..g {
        let s = &side[i * d..(i + 1) * d];
        let r = &rels[i * rd..(i + 1) * rd];
        let (mat, rv) = r.split_at(d * d);
        for a in 0..d {
            let ms = kernels::dot(&mat[a * d..(a + 1) * d], s);
            o[a] = match mode {
                CorruptSide::Tail => ms + rv[a],
                CorruptSide::Head => ms - rv[a],
            };
        }
        for j in 0..k {
            let w = upstream[i * k + j];
            if w == 0.0 {
                continue;
            }
            let n = &negs[j * d..(j + 1) * d];
            for a in 0..d {
                proj[a] = kernels::dot(&mat[a * d..(a + 1) * d], n);
            }
            let ds = &mut d_side[i * d..(i + 1) * d];
            let (dmat, drv) = d_rels[i * rd..(i + 1) * rd].split_at_mut(d * d);
            let dn = &mut d_negs[j * d..(j + 1) * d];
            for a in 0..d {
                // e_a follows the true residual orientation; in head mode
                // o = Ms - r so e = -(Mn + r - Ms).
                let e = o[a] - proj[a];
                let de = -2.0 * e * w; // df/de with f = -|e|^2
                match mode {
                    CorruptSide::Tail => drv[a] += de,
                    CorruptSide::Head => drv[a] -= de,
                }
                let row = &mat[a * d..(a + 1) * d];
                let drow = &mut dmat[a * d..(a + 1) * d];
                for c in 0..d {
                    ds[c] += de * row[c];
                    dn[c] -= de * row[c];
                    drow[c] += de * (s[c] - n[c]);
                }
            }
        }
    }
    Ok(())
}
