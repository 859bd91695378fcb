//! L2 error norms of the discrete displacement and stress fields.
//!
//! Integration uses a rule two points per direction richer than the one the
//! assembly used, so the reported numbers measure the discretization and not
//! the quadrature. Element contributions are accumulated in element order,
//! keeping the totals independent of the thread count.

use super::ErrorMeasure;
use crate::forms::{self, trial_layout, TrialLayout, SYM6};
use crate::material::IsotropicMaterial;
use crate::mesh::ElementId;
use crate::spaces::{self, shape1d};
use crate::system::assemble::{element_coefficients, Assembled, Discretization};
use crate::system::SystemError;
use nalgebra::DVector;
use rayon::prelude::*;

/// Squared-error contributions of one element, one entry per measure.
fn element_error_sq(
    disc: &Discretization,
    asm: &Assembled,
    e: ElementId,
    u: &DVector<f64>,
    measures: &[ErrorMeasure],
    tabs: &forms::Tabulations,
) -> Result<Vec<f64>, SystemError> {
    let setup = disc.setup_for(e)?;
    let layout = trial_layout(setup.formulation, disc.p);
    let c = element_coefficients(disc, asm, e, u)?;
    let geo = forms::element_geometry(disc.mesh, e, &tabs.vol);
    let nq = geo.wdet.len();
    let sub = disc.mesh.elements[e as usize].subdomain;

    let mut out = Vec::with_capacity(measures.len());
    for measure in measures {
        let mut acc = 0.0;
        match measure {
            ErrorMeasure::DisplacementL2(exact) => {
                let disp = displacement_values(&layout, &c, tabs, &geo);
                for q in 0..nq {
                    let ex = exact(geo.points[q]);
                    let mut d2 = 0.0;
                    for cc in 0..3 {
                        let d = disp[cc][q] - ex[cc];
                        d2 += d * d;
                    }
                    acc += geo.wdet[q] * d2;
                }
            }
            ErrorMeasure::StressL2(exact) => {
                let stress = stress_values(&layout, &c, tabs, &geo, &setup.material)?;
                for q in 0..nq {
                    let ex = exact(sub, geo.points[q]);
                    let mut d2 = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            let d = stress[a][b][q] - ex[a][b];
                            d2 += d * d;
                        }
                    }
                    acc += geo.wdet[q] * d2;
                }
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Discrete displacement components at the volume points of `tabs`.
fn displacement_values(
    layout: &TrialLayout,
    c: &DVector<f64>,
    tabs: &forms::Tabulations,
    geo: &forms::Geo,
) -> [Vec<f64>; 3] {
    let nq = geo.wdet.len();
    let mut disp = [vec![0.0; nq], vec![0.0; nq], vec![0.0; nq]];
    if layout.offsets.h1_u != usize::MAX {
        let v = &tabs.h1_trial.value;
        let dim = v.ncols();
        for cc in 0..3 {
            let off = layout.offsets.h1_u + cc * dim;
            for q in 0..nq {
                let mut s = 0.0;
                for a in 0..dim {
                    s += c[off + a] * v[(q, a)];
                }
                disp[cc][q] = s;
            }
        }
    } else {
        let v = &tabs.l2_trial.value;
        let dim = v.ncols();
        for cc in 0..3 {
            let off = layout.offsets.l2_u + cc * dim;
            for q in 0..nq {
                let mut s = 0.0;
                for a in 0..dim {
                    s += c[off + a] * v[(q, a)];
                }
                disp[cc][q] = s;
            }
        }
    }
    disp
}

/// Discrete stress components at the volume points of `tabs`. The stress
/// comes from the discontinuous stress field, the conforming stress field,
/// or (displacement-only trial) the stiffness applied to the displacement
/// gradient, whichever the formulation carries.
fn stress_values(
    layout: &TrialLayout,
    c: &DVector<f64>,
    tabs: &forms::Tabulations,
    geo: &forms::Geo,
    material: &IsotropicMaterial,
) -> Result<[[Vec<f64>; 3]; 3], SystemError> {
    let nq = geo.wdet.len();
    let mut stress = std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; nq]));
    if layout.offsets.l2_sigma != usize::MAX {
        let v = &tabs.l2_trial.value;
        let dim = v.ncols();
        for (k6, &(a, b)) in SYM6.iter().enumerate() {
            let off = layout.offsets.l2_sigma + k6 * dim;
            for q in 0..nq {
                let mut s = 0.0;
                for j in 0..dim {
                    s += c[off + j] * v[(q, j)];
                }
                stress[a][b][q] = s;
                if a != b {
                    stress[b][a][q] = s;
                }
            }
        }
    } else if layout.offsets.hdiv_sigma != usize::MAX {
        let ph = forms::phys_hdiv(&tabs.hdiv_trial, geo);
        for row in 0..3 {
            let off = layout.offsets.hdiv_sigma + row * ph.dim;
            for cc in 0..3 {
                for q in 0..nq {
                    let mut s = 0.0;
                    for j in 0..ph.dim {
                        s += c[off + j] * ph.p[cc][(q, j)];
                    }
                    stress[row][cc][q] = s;
                }
            }
        }
    } else {
        let (lambda, mu) = material
            .stiffness_coefficients()
            .map_err(|source| forms::FormsError::IncompressibleMaterial {
                formulation: layout.formulation,
                source,
            })?;
        let gr = forms::phys_h1(&tabs.h1_trial, geo);
        let dim = gr.v.ncols();
        // grad[cc][d] = d_d u_cc
        let mut grad = [[0.0; 3]; 3];
        for q in 0..nq {
            for cc in 0..3 {
                let off = layout.offsets.h1_u + cc * dim;
                for d in 0..3 {
                    let mut s = 0.0;
                    for j in 0..dim {
                        s += c[off + j] * gr.g[d][(q, j)];
                    }
                    grad[cc][d] = s;
                }
            }
            let tr = grad[0][0] + grad[1][1] + grad[2][2];
            for a in 0..3 {
                for b in 0..3 {
                    let sym = 0.5 * (grad[a][b] + grad[b][a]);
                    stress[a][b][q] = 2.0 * mu * sym + if a == b { lambda * tr } else { 0.0 };
                }
            }
        }
    }
    Ok(stress)
}

/// L2 errors of the solved fields against the exact ones, one value per
/// measure, in the order given.
pub fn measure_errors(
    disc: &Discretization,
    asm: &Assembled,
    u: &DVector<f64>,
    measures: &[ErrorMeasure],
) -> Result<Vec<f64>, SystemError> {
    if measures.is_empty() {
        return Ok(Vec::new());
    }
    let n_err = disc.n_gauss() + 2;
    let tabs = forms::Tabulations::build(disc.p, disc.dp, n_err, n_err);
    let n_elem = disc.mesh.elements.len();

    const CHUNK: usize = 32;
    let mut totals = vec![0.0; measures.len()];
    let mut start = 0;
    while start < n_elem {
        let end = (start + CHUNK).min(n_elem);
        let parts: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|e| element_error_sq(disc, asm, e as ElementId, u, measures, &tabs))
            .collect::<Result<_, _>>()?;
        for part in &parts {
            for (t, &v) in totals.iter_mut().zip(part) {
                *t += v;
            }
        }
        start = end;
    }
    Ok(totals.iter().map(|&t| t.max(0.0).sqrt()).collect())
}

/// Discrete stress tensor of element `e` at one reference point; used for
/// pointwise reporting (interface samples), not for norms.
pub fn stress_at_ref_point(
    disc: &Discretization,
    asm: &Assembled,
    e: ElementId,
    u: &DVector<f64>,
    xi: [f64; 3],
) -> Result<[[f64; 3]; 3], SystemError> {
    let setup = disc.setup_for(e)?;
    let layout = trial_layout(setup.formulation, disc.p);
    let c = element_coefficients(disc, asm, e, u)?;
    let g = disc.mesh.geometry_sample(e, xi);
    let p = disc.p;
    let mut stress = [[0.0; 3]; 3];

    if layout.offsets.l2_sigma != usize::MAX {
        let space = spaces::L2Space3d { n: p };
        let mut axis = [vec![0.0; p], vec![0.0; p], vec![0.0; p]];
        for d in 0..3 {
            shape1d::l2_basis(p, xi[d], &mut axis[d]);
        }
        for (k6, &(a, b)) in SYM6.iter().enumerate() {
            let off = layout.offsets.l2_sigma + k6 * space.dim();
            let mut s = 0.0;
            for flat in 0..space.dim() {
                let [i, j, k] = space.index(flat);
                s += c[off + flat] * axis[0][i] * axis[1][j] * axis[2][k];
            }
            stress[a][b] = s;
            if a != b {
                stress[b][a] = s;
            }
        }
    } else if layout.offsets.hdiv_sigma != usize::MAX {
        let space = spaces::HdivSpace3d { r: p };
        let mut h1v = [vec![0.0; p + 1], vec![0.0; p + 1], vec![0.0; p + 1]];
        let mut l2v = [vec![0.0; p], vec![0.0; p], vec![0.0; p]];
        let mut scratch = vec![0.0; p + 1];
        for d in 0..3 {
            shape1d::h1_basis(p, xi[d], &mut h1v[d], &mut scratch);
            shape1d::l2_basis(p, xi[d], &mut l2v[d]);
        }
        let inv_det = 1.0 / g.det;
        for row in 0..3 {
            let off = layout.offsets.hdiv_sigma + row * space.dim();
            for flat in 0..space.dim() {
                let idx = space.index(flat);
                let [t1, t2] = crate::mesh::face_tangents(idx.block);
                let vhat = h1v[idx.block][idx.a] * l2v[t1][idx.alpha] * l2v[t2][idx.beta];
                let coef = c[off + flat] * vhat * inv_det;
                for cc in 0..3 {
                    stress[row][cc] += coef * g.jacobian[(cc, idx.block)];
                }
            }
        }
    } else {
        let (lambda, mu) = setup
            .material
            .stiffness_coefficients()
            .map_err(|source| forms::FormsError::IncompressibleMaterial {
                formulation: layout.formulation,
                source,
            })?;
        let space = spaces::H1Space3d { p };
        let mut v = [vec![0.0; p + 1], vec![0.0; p + 1], vec![0.0; p + 1]];
        let mut dv = [vec![0.0; p + 1], vec![0.0; p + 1], vec![0.0; p + 1]];
        for d in 0..3 {
            let (vd, dvd) = (&mut v[d], &mut dv[d]);
            shape1d::h1_basis(p, xi[d], vd, dvd);
        }
        let mut grad = [[0.0; 3]; 3];
        for cc in 0..3 {
            let off = layout.offsets.h1_u + cc * space.dim();
            for flat in 0..space.dim() {
                let [i, j, k] = space.index(flat);
                let gref = [
                    dv[0][i] * v[1][j] * v[2][k],
                    v[0][i] * dv[1][j] * v[2][k],
                    v[0][i] * v[1][j] * dv[2][k],
                ];
                for d in 0..3 {
                    let mut gphys = 0.0;
                    for kk in 0..3 {
                        gphys += g.inv_t[(d, kk)] * gref[kk];
                    }
                    grad[cc][d] += c[off + flat] * gphys;
                }
            }
        }
        let tr = grad[0][0] + grad[1][1] + grad[2][2];
        for a in 0..3 {
            for b in 0..3 {
                let sym = 0.5 * (grad[a][b] + grad[b][a]);
                stress[a][b] = 2.0 * mu * sym + if a == b { lambda * tr } else { 0.0 };
            }
        }
    }
    Ok(stress)
}
