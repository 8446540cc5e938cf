//! Second stage: `E_j = D_j/L`, then `n` from `∇×∇×E_j = k²nE_j`, then `σ`, `ε`.

use crate::cgo::curl_curl_envelope;
use crate::error::{Error, Result};
use crate::forward::Modulated;
use crate::grid::{Mask, ScalarField, C64};
use crate::vec3::{cdot_conj, cnorm};
use serde::{Deserialize, Serialize};

/// `E_j = D_j/L` on `mask` (zero elsewhere). Fails where `L < l_floor` on the mask.
pub fn recover_e(d: &[Modulated], l: &ScalarField, mask: &Mask, l_floor: f64) -> Result<Vec<Modulated>> {
    let idx = mask.indices();
    if let Some(&i) = idx.iter().find(|&&i| !(l.values()[i].re >= l_floor)) {
        return Err(Error::Recovery(format!(
            "L = {} below the floor {l_floor} at node {i}",
            l.values()[i]
        )));
    }
    d.iter()
        .map(|dj| {
            if !dj.envelope.grid().same_as(l.grid()) {
                return Err(Error::Recovery("data and mobility grids differ".into()));
            }
            Ok(Modulated {
                zeta: dj.zeta,
                envelope: dj.envelope.map_nodes(|i, p| {
                    if mask.contains(i) {
                        let inv = 1.0 / l.values()[i];
                        p.map(|v| v * inv)
                    } else {
                        [C64::new(0.0, 0.0); 3]
                    }
                }),
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RecoveredIndex {
    /// `n` on the mask, zero elsewhere and where the weight is below the floor.
    pub n: ScalarField,
    /// `Σ_j|E_j|²` normalised to a maximum of 1 over the mask.
    pub weight: ScalarField,
    pub below_floor: usize,
    pub mask_nodes: usize,
}

/// Per-measurement weights in the quotient for `n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Each `E_j` divided by its growth factor `|e^{iζ_j·x}|`, so every
    /// illumination counts equally. Errors in `∇L` enter the two members of a
    /// pair with opposite signs and cancel.
    #[default]
    Envelope,
    /// Plain `Σ_j |E_j|²`; dominated by whichever field grows at `x`.
    Physical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    /// Weight floor relative to the largest weight on the mask.
    pub weight_floor: f64,
    /// Fraction of mask nodes allowed below the floor.
    pub max_below_floor: f64,
    /// Smallest `L` accepted when dividing the data.
    pub l_floor: f64,
    /// Taxicab radius (in cells) removed from the reconstruction mask before
    /// differentiating; 4 covers two widths of the fourth-order stencils,
    /// mixed derivatives included.
    pub erosion: usize,
    pub weighting: Weighting,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            weight_floor: 1e-12,
            max_below_floor: 0.01,
            l_floor: 0.1,
            erosion: 4,
            weighting: Weighting::Envelope,
        }
    }
}

/// Nodes of `region` where the second differences of `E_j` see only `region`.
pub fn recovery_mask(region: &Mask, cfg: &RecoveryConfig) -> Mask {
    region.erode_taxicab(cfg.erosion)
}

/// Least-squares quotient
/// `n = Σ_j (∇×∇×E_j)·conj(E_j) / (k² Σ_j |E_j|²)` on `mask`.
///
/// With `E_j = e^{iζ_j·x}F_j`, each term carries the real factor
/// `e^{−2Im ζ_j·x}`. Under [`Weighting::Physical`] these are kept and rescaled
/// jointly in log space; under [`Weighting::Envelope`] they are dropped.
pub fn recover_n(e: &[Modulated], k: f64, mask: &Mask, cfg: &RecoveryConfig) -> Result<RecoveredIndex> {
    if e.is_empty() {
        return Err(Error::Recovery("no fields".into()));
    }
    let grid = *e[0].envelope.grid();
    let idx = mask.indices();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let cc: Vec<_> = e.iter().map(|f| curl_curl_envelope(f.zeta, &f.envelope)).collect();
    let logw = |j: usize, i: usize| {
        if cfg.weighting == Weighting::Envelope {
            return 0.0;
        }
        let x = grid.point(i);
        let z = e[j].zeta;
        -2.0 * (z[0].im * x[0] + z[1].im * x[1] + z[2].im * x[2])
    };
    let top = idx
        .iter()
        .flat_map(|&i| (0..e.len()).map(move |j| (j, i)))
        .map(|(j, i)| logw(j, i))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut num = vec![C64::new(0.0, 0.0); grid.node_count()];
    let mut den = vec![0.0; grid.node_count()];
    for &i in &idx {
        for j in 0..e.len() {
            let w = (logw(j, i) - top).exp();
            let f = e[j].envelope.at(i);
            num[i] += w * cdot_conj(cc[j].at(i), f);
            den[i] += w * cnorm(f).powi(2);
        }
    }
    let dmax = idx.iter().map(|&i| den[i]).fold(0.0, f64::max);
    if !(dmax > 0.0) {
        return Err(Error::Recovery("all fields vanish on the mask".into()));
    }
    let mut below = 0;
    let mut n = vec![C64::new(0.0, 0.0); grid.node_count()];
    let mut weight = vec![C64::new(0.0, 0.0); grid.node_count()];
    for &i in &idx {
        weight[i] = C64::new(den[i] / dmax, 0.0);
        if den[i] <= cfg.weight_floor * dmax {
            below += 1;
            continue;
        }
        n[i] = num[i] / (k * k * den[i]);
    }
    if below as f64 > cfg.max_below_floor * idx.len() as f64 {
        return Err(Error::Recovery(format!(
            "weight below floor at {below} of {} nodes",
            idx.len()
        )));
    }
    Ok(RecoveredIndex {
        n: ScalarField::from_values(grid, n)?,
        weight: ScalarField::from_values(grid, weight)?,
        below_floor: below,
        mask_nodes: idx.len(),
    })
}

/// `σ = ωε₀ Im n`, `ε = ε₀ Re n` (both real).
pub fn recover_sigma(n: &ScalarField, omega: f64, epsilon0: f64) -> (ScalarField, ScalarField) {
    (
        n.map(|v| C64::new(omega * epsilon0 * v.im, 0.0)),
        n.map(|v| C64::new(epsilon0 * v.re, 0.0)),
    )
}
