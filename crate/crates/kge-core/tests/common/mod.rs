//! Shared test support: an independent f64 reference scorer, finite
//! differences, and dataset discovery.
//!
//! The reference scorer is deliberately written from the score formulas
//! alone, sharing no code with the crate, so gradient checks compare two
//! independent routes.

#![allow(dead_code)]

use std::path::PathBuf;

use kge_core::models::{ModelConfig, ModelKind};

/// Naive f64 evaluation of the score function.
pub fn score_f64(cfg: &ModelConfig, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let d = cfg.dim;
    let m = d / 2;
    match cfg.kind {
        ModelKind::TransEL1 => -(0..d).map(|c| (h[c] + r[c] - t[c]).abs()).sum::<f64>(),
        ModelKind::TransEL2 => {
            -(0..d).map(|c| (h[c] + r[c] - t[c]).powi(2)).sum::<f64>().sqrt()
        }
        ModelKind::TransR => {
            let mut s = 0.0;
            for a in 0..d {
                let mut p = r[d * d + a];
                for c in 0..d {
                    p += r[a * d + c] * (h[c] - t[c]);
                }
                s += p * p;
            }
            -s
        }
        ModelKind::DistMult => (0..d).map(|c| h[c] * r[c] * t[c]).sum(),
        ModelKind::ComplEx => {
            let mut s = 0.0;
            for c in 0..m {
                // Re((h_re + i h_im)(r_re + i r_im)(t_re - i t_im))
                let pr = h[c] * r[c] - h[m + c] * r[m + c];
                let pi = h[c] * r[m + c] + h[m + c] * r[c];
                s += pr * t[c] + pi * t[m + c];
            }
            s
        }
        ModelKind::Rescal => {
            let mut s = 0.0;
            for a in 0..d {
                for c in 0..d {
                    s += h[a] * r[a * d + c] * t[c];
                }
            }
            s
        }
        ModelKind::RotatE => {
            let mut s = 0.0;
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
    }
}

pub struct FdCheck {
    pub max_rel_err: f64,
    pub worst_block: &'static str,
}

/// Central finite differences of the f64 reference against the crate's
/// analytic gradient. Relative error uses a unit floor so near-zero
/// components do not blow up the ratio.
pub fn finite_difference_check(
    cfg: &ModelConfig,
    h: &[f32],
    r: &[f32],
    t: &[f32],
    step: f64,
) -> FdCheck {
    let (dh, dr, dt) = kge_core::models::score_grad(cfg, h, r, t, 1.0).unwrap();
    let hf: Vec<f64> = h.iter().map(|&x| x as f64).collect();
    let rf: Vec<f64> = r.iter().map(|&x| x as f64).collect();
    let tf: Vec<f64> = t.iter().map(|&x| x as f64).collect();
    let mut worst = FdCheck {
        max_rel_err: 0.0,
        worst_block: "h",
    };
    let mut check_block = |name: &'static str, base: &[f64], analytic: &[f32]| {
        for i in 0..base.len() {
            let mut plus = base.to_vec();
            plus[i] += step;
            let mut minus = base.to_vec();
            minus[i] -= step;
            let (fp, fm) = match name {
                "h" => (
                    score_f64(cfg, &plus, &rf, &tf),
                    score_f64(cfg, &minus, &rf, &tf),
                ),
                "r" => (
                    score_f64(cfg, &hf, &plus, &tf),
                    score_f64(cfg, &hf, &minus, &tf),
                ),
                _ => (
                    score_f64(cfg, &hf, &rf, &plus),
                    score_f64(cfg, &hf, &rf, &minus),
                ),
            };
            let fd = (fp - fm) / (2.0 * step);
            let rel = (analytic[i] as f64 - fd).abs() / fd.abs().max(1.0);
            if rel > worst.max_rel_err {
                worst.max_rel_err = rel;
                worst.worst_block = name;
            }
        }
    };
    check_block("h", &hf, &dh);
    check_block("r", &rf, &dr);
    check_block("t", &tf, &dt);
    worst
}

/// Random instance away from subgradient kinks: for the translational
/// models every residual coordinate stays clear of zero so the finite
/// difference stencil never straddles a kink.
pub fn random_smooth_instance(
    cfg: &ModelConfig,
    rng: &mut impl rand::Rng,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let d = cfg.dim;
    let rd = cfg.rel_dim();
    loop {
        let h: Vec<f32> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let r: Vec<f32> = (0..rd).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let t: Vec<f32> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let ok = match cfg.kind {
            ModelKind::TransEL1 | ModelKind::TransEL2 => (0..d)
                .all(|c| (h[c] + r[c] - t[c]).abs() > 1e-2),
            ModelKind::RotatE if cfg.rotate_unsquared => {
                (score_f64(
                    cfg,
                    &h.iter().map(|&x| x as f64).collect::<Vec<_>>(),
                    &r.iter().map(|&x| x as f64).collect::<Vec<_>>(),
                    &t.iter().map(|&x| x as f64).collect::<Vec<_>>(),
                ))
                .abs()
                    > 1e-2
            }
            _ => true,
        };
        if ok {
            return (h, r, t);
        }
    }
}

/// Locate the benchmark datasets: $KGE_DATA_DIR, or a `data/` directory in
/// an enclosing directory of the crate.
pub fn data_dir() -> Option<PathBuf> {
    if let Ok(dir) = std::env::var("KGE_DATA_DIR") {
        let p = PathBuf::from(dir);
        if p.join("FB15k/train.txt").exists() {
            return Some(p);
        }
    }
    let mut here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    loop {
        let candidate = here.join("data");
        if candidate.join("FB15k/train.txt").exists() {
            return Some(candidate);
        }
        if !here.pop() {
            return None;
        }
    }
}
