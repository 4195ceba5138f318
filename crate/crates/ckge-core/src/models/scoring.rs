//! Plausibility scores and their analytic gradients.
//!
//! Higher scores mean more plausible for every kind:
//!   transe-l1:  -||h + r - t||_1
//!   transe-l2:  -||h + r - t||_2
//!   transh:     -||(h - <h,w>w) + d_r - (t - <t,w>w)||_2
//!   distmult:   Σ_k h_k r_k t_k
//!   complex:    Re<h, r, conj(t)>   (split-half layout: [re..., im...])
//!   rotate:     -Σ_k |h_k ∘ r_k - t_k|  (complex modulus per dimension,
//!               r_k = exp(iθ_k) a unit rotation)

use crate::error::{Error, Result};

use super::{EmbeddingStore, ModelKind};

const SAFE_NORM_EPS: f64 = 1e-30;

fn check_ids(emb: &EmbeddingStore, h: u32, r: u32, t: u32) -> Result<()> {
    if h as usize >= emb.n_entities() || t as usize >= emb.n_entities() {
        return Err(Error::Bounds(format!(
            "entity id out of range: ({h}, {t}) with |E| = {}",
            emb.n_entities()
        )));
    }
    if r as usize >= emb.n_relations() {
        return Err(Error::Bounds(format!(
            "relation id {r} out of range with |R| = {}",
            emb.n_relations()
        )));
    }
    Ok(())
}

/// Plausibility score p(h, r, t).
pub fn score(emb: &EmbeddingStore, h: u32, r: u32, t: u32) -> Result<f64> {
    check_ids(emb, h, r, t)?;
    Ok(score_unchecked(emb, h, r, t))
}

pub(crate) fn score_unchecked(emb: &EmbeddingStore, h: u32, r: u32, t: u32) -> f64 {
    let eh = emb.entity(h);
    let et = emb.entity(t);
    match emb.kind() {
        ModelKind::TransEL1 => {
            let er = emb.relation_row(r);
            -eh.iter()
                .zip(er)
                .zip(et)
                .map(|((h, r), t)| (h + r - t).abs())
                .sum::<f64>()
        }
        ModelKind::TransEL2 => {
            let er = emb.relation_row(r);
            -eh.iter()
                .zip(er)
                .zip(et)
                .map(|((h, r), t)| {
                    let u = h + r - t;
                    u * u
                })
                .sum::<f64>()
                .sqrt()
        }
        ModelKind::TransH => {
            let w = emb.relation_row(2 * r);
            let d = emb.relation_row(2 * r + 1);
            let hw: f64 = eh.iter().zip(w).map(|(a, b)| a * b).sum();
            let tw: f64 = et.iter().zip(w).map(|(a, b)| a * b).sum();
            let mut sq = 0.0;
            for k in 0..eh.len() {
                let f = eh[k] - hw * w[k] + d[k] - et[k] + tw * w[k];
                sq += f * f;
            }
            -sq.sqrt()
        }
        ModelKind::DistMult => {
            let er = emb.relation_row(r);
            eh.iter().zip(er).zip(et).map(|((h, r), t)| h * r * t).sum()
        }
        ModelKind::ComplEx => {
            let er = emb.relation_row(r);
            let m = eh.len() / 2;
            let mut s = 0.0;
            for k in 0..m {
                let (hr, hi) = (eh[k], eh[m + k]);
                let (rr, ri) = (er[k], er[m + k]);
                let (tr, ti) = (et[k], et[m + k]);
                s += hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr;
            }
            s
        }
        ModelKind::RotatE => {
            let phases = emb.relation_row(r);
            let m = eh.len() / 2;
            let mut s = 0.0;
            for k in 0..m {
                let (hr, hi) = (eh[k], eh[m + k]);
                let (c, sn) = (phases[k].cos(), phases[k].sin());
                let dr = hr * c - hi * sn - et[k];
                let di = hr * sn + hi * c - et[m + k];
                s -= (dr * dr + di * di).sqrt();
            }
            s
        }
    }
}

/// Analytic partials of the score with respect to every touched row.
/// Self-loops (h == t) yield separate head and tail partials; callers
/// accumulate both into the shared row.
#[derive(Clone, Debug)]
pub struct ScorePartials {
    pub d_head: Vec<f64>,
    pub d_tail: Vec<f64>,
    /// (raw relation row index, gradient).
    pub d_relation: Vec<(u32, Vec<f64>)>,
}

pub fn score_gradients(emb: &EmbeddingStore, h: u32, r: u32, t: u32) -> Result<ScorePartials> {
    check_ids(emb, h, r, t)?;
    let eh = emb.entity(h);
    let et = emb.entity(t);
    let dim = emb.dim();
    let partials = match emb.kind() {
        ModelKind::TransEL1 => {
            let er = emb.relation_row(r);
            let mut dh = vec![0.0; dim];
            let mut dt = vec![0.0; dim];
            let mut dr = vec![0.0; dim];
            for k in 0..dim {
                let u = eh[k] + er[k] - et[k];
                let sg = if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                dh[k] = -sg;
                dr[k] = -sg;
                dt[k] = sg;
            }
            ScorePartials {
                d_head: dh,
                d_tail: dt,
                d_relation: vec![(r, dr)],
            }
        }
        ModelKind::TransEL2 => {
            let er = emb.relation_row(r);
            let mut u = vec![0.0; dim];
            let mut sq = 0.0;
            for k in 0..dim {
                u[k] = eh[k] + er[k] - et[k];
                sq += u[k] * u[k];
            }
            let norm = sq.sqrt();
            let inv = if norm > SAFE_NORM_EPS {
                1.0 / norm
            } else {
                0.0
            };
            let dh: Vec<f64> = u.iter().map(|v| -v * inv).collect();
            let dt: Vec<f64> = u.iter().map(|v| v * inv).collect();
            ScorePartials {
                d_head: dh.clone(),
                d_tail: dt,
                d_relation: vec![(r, dh)],
            }
        }
        ModelKind::TransH => {
            let w = emb.relation_row(2 * r);
            let d = emb.relation_row(2 * r + 1);
            let hw: f64 = eh.iter().zip(w).map(|(a, b)| a * b).sum();
            let tw: f64 = et.iter().zip(w).map(|(a, b)| a * b).sum();
            let mut f = vec![0.0; dim];
            let mut sq = 0.0;
            for k in 0..dim {
                f[k] = eh[k] - hw * w[k] + d[k] - et[k] + tw * w[k];
                sq += f[k] * f[k];
            }
            let norm = sq.sqrt();
            let inv = if norm > SAFE_NORM_EPS {
                1.0 / norm
            } else {
                0.0
            };
            // g = ds/df = -f / ||f||
            let g: Vec<f64> = f.iter().map(|v| -v * inv).collect();
            let gw: f64 = g.iter().zip(w).map(|(a, b)| a * b).sum();
            let mut dh = vec![0.0; dim];
            let mut dt = vec![0.0; dim];
            let mut dw = vec![0.0; dim];
            for k in 0..dim {
                let proj_g = g[k] - gw * w[k];
                dh[k] = proj_g;
                dt[k] = -proj_g;
                dw[k] = gw * (et[k] - eh[k]) + (tw - hw) * g[k];
            }
            ScorePartials {
                d_head: dh,
                d_tail: dt,
                d_relation: vec![(2 * r, dw), (2 * r + 1, g)],
            }
        }
        ModelKind::DistMult => {
            let er = emb.relation_row(r);
            let dh: Vec<f64> = (0..dim).map(|k| er[k] * et[k]).collect();
            let dr: Vec<f64> = (0..dim).map(|k| eh[k] * et[k]).collect();
            let dt: Vec<f64> = (0..dim).map(|k| eh[k] * er[k]).collect();
            ScorePartials {
                d_head: dh,
                d_tail: dt,
                d_relation: vec![(r, dr)],
            }
        }
        ModelKind::ComplEx => {
            let er = emb.relation_row(r);
            let m = dim / 2;
            let mut dh = vec![0.0; dim];
            let mut dt = vec![0.0; dim];
            let mut dr = vec![0.0; dim];
            for k in 0..m {
                let (hr, hi) = (eh[k], eh[m + k]);
                let (rr, ri) = (er[k], er[m + k]);
                let (tr, ti) = (et[k], et[m + k]);
                dh[k] = rr * tr + ri * ti;
                dh[m + k] = rr * ti - ri * tr;
                dr[k] = hr * tr + hi * ti;
                dr[m + k] = hr * ti - hi * tr;
                dt[k] = hr * rr - hi * ri;
                dt[m + k] = hi * rr + hr * ri;
            }
            ScorePartials {
                d_head: dh,
                d_tail: dt,
                d_relation: vec![(r, dr)],
            }
        }
        ModelKind::RotatE => {
            let phases = emb.relation_row(r);
            let m = dim / 2;
            let mut dh = vec![0.0; dim];
            let mut dt = vec![0.0; dim];
            let mut dphase = vec![0.0; m];
            for k in 0..m {
                let (hr, hi) = (eh[k], eh[m + k]);
                let (c, sn) = (phases[k].cos(), phases[k].sin());
                let ur = hr * c - hi * sn;
                let ui = hr * sn + hi * c;
                let dr_ = ur - et[k];
                let di = ui - et[m + k];
                let modulus = (dr_ * dr_ + di * di).sqrt();
                let inv = if modulus > SAFE_NORM_EPS {
                    1.0 / modulus
                } else {
                    0.0
                };
                // d(-|u∘r - t|)/d· via the complex chain rule.
                dh[k] = -(dr_ * c + di * sn) * inv;
                dh[m + k] = -(-dr_ * sn + di * c) * inv;
                dt[k] = dr_ * inv;
                dt[m + k] = di * inv;
                dphase[k] = -(dr_ * (-ui) + di * ur) * inv;
            }
            ScorePartials {
                d_head: dh,
                d_tail: dt,
                d_relation: vec![(r, dphase)],
            }
        }
    };
    Ok(partials)
}

/// Scores of (h, r, c) for every candidate tail c, element-for-element equal
/// to the per-triple score (same kernel, same operation order).
pub fn score_all_tails(
    emb: &EmbeddingStore,
    h: u32,
    r: u32,
    candidates: impl Iterator<Item = u32>,
) -> Result<Vec<f64>> {
    if h as usize >= emb.n_entities() || r as usize >= emb.n_relations() {
        return Err(Error::Bounds(format!("query ids ({h}, {r}) out of range")));
    }
    candidates
        .map(|c| {
            if c as usize >= emb.n_entities() {
                return Err(Error::Bounds(format!("candidate {c} out of range")));
            }
            Ok(score_unchecked(emb, h, r, c))
        })
        .collect()
}

/// Scores of (c, r, t) for every candidate head c.
pub fn score_all_heads(
    emb: &EmbeddingStore,
    r: u32,
    t: u32,
    candidates: impl Iterator<Item = u32>,
) -> Result<Vec<f64>> {
    if t as usize >= emb.n_entities() || r as usize >= emb.n_relations() {
        return Err(Error::Bounds(format!("query ids ({r}, {t}) out of range")));
    }
    candidates
        .map(|c| {
            if c as usize >= emb.n_entities() {
                return Err(Error::Bounds(format!("candidate {c} out of range")));
            }
            Ok(score_unchecked(emb, c, r, t))
        })
        .collect()
}
