//! Mesh-level assembly of the condensed normal equations.
//!
//! Element work runs in parallel chunks; accumulation into the global
//! matrix walks elements in index order so results are independent of the
//! thread count. Interior elimination data is spilled to an anonymous
//! temporary file and read back when element fields are reconstructed.

use super::SystemError;
use crate::dpg::{self, CondensedElement};
use crate::forms::{
    element_operators, test_layout, trial_layout, Formulation, Tabulations, TestLayout,
    TrialLayout,
};
use crate::material::IsotropicMaterial;
use crate::mesh::{ElementId, Mesh, SubdomainId};
use crate::system::dofmap::{element_scatter, DofMap, ElementScatter};
use crate::system::solve::CsrUpper;
use nalgebra::DVector;
use rayon::prelude::*;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;

/// Formulation and material of one subdomain.
#[derive(Debug, Clone)]
pub struct SubdomainSetup {
    pub formulation: Formulation,
    pub material: IsotropicMaterial,
}

pub type BodyForce<'a> = &'a (dyn Fn([f64; 3]) -> [f64; 3] + Sync);

/// Everything needed to assemble one global problem.
pub struct Discretization<'a> {
    pub mesh: &'a Mesh,
    pub p: usize,
    pub dp: usize,
    pub subdomains: HashMap<SubdomainId, SubdomainSetup>,
    pub body_force: BodyForce<'a>,
    /// Extra Gauss points per direction beyond the `p + dp + 2` default;
    /// curved geometries use a positive boost.
    pub quadrature_boost: usize,
}

impl<'a> Discretization<'a> {
    pub fn n_gauss(&self) -> usize {
        self.p + self.dp + 2 + self.quadrature_boost
    }

    pub fn setup_for(&self, e: ElementId) -> Result<&SubdomainSetup, SystemError> {
        let sub = self.mesh.elements[e as usize].subdomain;
        self.subdomains
            .get(&sub)
            .ok_or(SystemError::SubdomainNotConfigured { subdomain: sub })
    }
}

/// Per-element interior elimination records on a temporary file.
pub struct Stash {
    file: File,
    index: Vec<StashEntry>,
}

#[derive(Debug, Clone, Copy)]
struct StashEntry {
    offset: u64,
    n_local: u32,
    n_skel: u32,
}

struct StashWriter {
    w: BufWriter<File>,
    index: Vec<StashEntry>,
    pos: u64,
}

impl StashWriter {
    fn create() -> std::io::Result<StashWriter> {
        Ok(StashWriter {
            w: BufWriter::with_capacity(1 << 20, tempfile::tempfile()?),
            index: Vec::new(),
            pos: 0,
        })
    }

    /// Appends `f_l`, the packed interior factor and the coupling block.
    fn append(&mut self, cond: &CondensedElement) -> std::io::Result<()> {
        let nl = cond.n_local;
        let ns = cond.k_ls.ncols();
        self.index.push(StashEntry {
            offset: self.pos,
            n_local: nl as u32,
            n_skel: ns as u32,
        });
        write_f64s(&mut self.w, cond.f_l.as_slice())?;
        write_f64s(&mut self.w, &cond.l_ll)?;
        write_f64s(&mut self.w, cond.k_ls.as_slice())?;
        self.pos += 8 * (nl + nl * (nl + 1) / 2 + nl * ns) as u64;
        Ok(())
    }

    fn finish(self) -> std::io::Result<Stash> {
        Ok(Stash {
            file: self.w.into_inner().map_err(|e| e.into_error())?,
            index: self.index,
        })
    }
}

impl Stash {
    pub fn n_elements(&self) -> usize {
        self.index.len()
    }

    /// Interior coefficients of element `e` given its signed skeleton
    /// values, in element column order.
    pub fn recover(&self, e: usize, u_s: &DVector<f64>) -> std::io::Result<DVector<f64>> {
        let entry = self.index[e];
        let nl = entry.n_local as usize;
        let ns = entry.n_skel as usize;
        assert_eq!(u_s.len(), ns);
        let mut raw = vec![0.0; nl + nl * (nl + 1) / 2 + nl * ns];
        read_f64s(&self.file, entry.offset, &mut raw)?;
        let f_l = DVector::from_column_slice(&raw[..nl]);
        let l_ll = &raw[nl..nl + nl * (nl + 1) / 2];
        let k_ls = nalgebra::DMatrix::from_column_slice(nl, ns, &raw[nl + nl * (nl + 1) / 2..]);
        Ok(dpg::recover_local(nl, l_ll, &k_ls, &f_l, u_s))
    }
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> std::io::Result<()> {
    let mut buf = [0u8; 8 * 512];
    for chunk in xs.chunks(512) {
        for (i, &x) in chunk.iter().enumerate() {
            buf[8 * i..8 * i + 8].copy_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf[..8 * chunk.len()])?;
    }
    Ok(())
}

fn read_f64s(file: &File, offset: u64, out: &mut [f64]) -> std::io::Result<()> {
    let mut bytes = vec![0u8; 8 * out.len()];
    file.read_exact_at(&mut bytes, offset)?;
    for (i, x) in out.iter_mut().enumerate() {
        *x = f64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
    }
    Ok(())
}

/// Assembled global problem before boundary constraints are applied.
pub struct Assembled {
    pub dm: DofMap,
    pub k: CsrUpper,
    pub f: DVector<f64>,
    /// Sum of the element constants: the residual at skeleton values `u`
    /// is `u' K u - 2 f' u + c_total`.
    pub c_total: f64,
    pub stash: Stash,
}

/// Caches shared across elements of the same formulation.
struct FormulationCache {
    trial: HashMap<Formulation, TrialLayout>,
    test: HashMap<Formulation, TestLayout>,
}

impl FormulationCache {
    fn build(disc: &Discretization) -> FormulationCache {
        let mut trial = HashMap::new();
        let mut test = HashMap::new();
        for setup in disc.subdomains.values() {
            trial
                .entry(setup.formulation)
                .or_insert_with(|| trial_layout(setup.formulation, disc.p));
            test.entry(setup.formulation)
                .or_insert_with(|| test_layout(setup.formulation, disc.p, disc.dp));
        }
        FormulationCache { trial, test }
    }
}

pub fn assemble(disc: &Discretization) -> Result<Assembled, SystemError> {
    let mesh = disc.mesh;
    let n_elem = mesh.elements.len();
    let dm = DofMap::build(mesh, disc.p);
    let cache = FormulationCache::build(disc);
    // Validate every subdomain up front so errors surface before the loop.
    for e in 0..n_elem {
        disc.setup_for(e as ElementId)?;
    }

    let scatter_of = |e: usize| -> ElementScatter {
        let setup = disc.setup_for(e as ElementId).expect("validated above");
        element_scatter(mesh, e as ElementId, &cache.trial[&setup.formulation], &dm)
    };

    // Distinct global unknowns per element, kept for the symbolic pass.
    let elem_dofs: Vec<Vec<u32>> = (0..n_elem)
        .map(|e| scatter_of(e).dofs_sorted.iter().map(|&d| d as u32).collect())
        .collect();
    let mut k = symbolic_pattern(dm.n_global, &elem_dofs);
    drop(elem_dofs);

    let mut f = DVector::zeros(dm.n_global);
    let mut c_total = 0.0;
    let mut stash = StashWriter::create()?;
    let n_gauss = disc.n_gauss();
    let tabs = Tabulations::build(disc.p, disc.dp, n_gauss, n_gauss);

    // Parallel element work in fixed-size chunks, accumulated in element
    // order so the result does not depend on the thread count.
    const CHUNK: usize = 32;
    let mut start = 0;
    while start < n_elem {
        let end = (start + CHUNK).min(n_elem);
        let results: Vec<(CondensedElement, ElementScatter)> = (start..end)
            .into_par_iter()
            .map(|e| -> Result<_, SystemError> {
                let setup = disc.setup_for(e as ElementId)?;
                let scat = scatter_of(e);
                let ops = element_operators(
                    mesh,
                    e as ElementId,
                    &setup.material,
                    setup.formulation,
                    &tabs,
                    disc.body_force,
                )?;
                let sys = dpg::reduce(&ops, &cache.test[&setup.formulation])?;
                let cond = dpg::condense(&sys, &scat.locals, &scat.skel_cols)?;
                Ok((cond, scat))
            })
            .collect::<Result<_, _>>()?;
        for (cond, scat) in &results {
            accumulate(&mut k, &mut f, &mut c_total, cond, &scat.skel_dofs);
            stash.append(cond)?;
        }
        start = end;
    }

    Ok(Assembled {
        dm,
        k,
        f,
        c_total,
        stash: stash.finish()?,
    })
}

/// Builds the union sparsity pattern: every pair of unknowns sharing an
/// element couples.
fn symbolic_pattern(n_global: usize, elem_dofs: &[Vec<u32>]) -> CsrUpper {
    // Elements touching each unknown, in compressed form.
    let mut count = vec![0u32; n_global + 1];
    for dofs in elem_dofs {
        for &d in dofs {
            count[d as usize + 1] += 1;
        }
    }
    let mut touch_ptr = vec![0usize; n_global + 1];
    for i in 0..n_global {
        touch_ptr[i + 1] = touch_ptr[i] + count[i + 1] as usize;
    }
    let mut touch = vec![0u32; touch_ptr[n_global]];
    let mut cursor = touch_ptr.clone();
    for (e, dofs) in elem_dofs.iter().enumerate() {
        for &d in dofs {
            touch[cursor[d as usize]] = e as u32;
            cursor[d as usize] += 1;
        }
    }

    let mut row_ptr = vec![0usize; n_global + 1];
    let mut col: Vec<u32> = Vec::new();
    let mut scratch: Vec<u32> = Vec::new();
    for i in 0..n_global {
        scratch.clear();
        for &e in &touch[touch_ptr[i]..touch_ptr[i + 1]] {
            let dofs = &elem_dofs[e as usize];
            let from = dofs.partition_point(|&d| (d as usize) < i);
            scratch.extend_from_slice(&dofs[from..]);
        }
        scratch.sort_unstable();
        scratch.dedup();
        col.extend_from_slice(&scratch);
        row_ptr[i + 1] = col.len();
    }
    let val = vec![0.0; col.len()];
    CsrUpper {
        n: n_global,
        row_ptr,
        col,
        val,
    }
}

/// Adds one condensed element into the upper-triangle storage. A diagonal
/// entry collects both `(a, b)` and `(b, a)` contributions when two element
/// columns share one global unknown, which is the correct double sum.
fn accumulate(
    k: &mut CsrUpper,
    f: &mut DVector<f64>,
    c_total: &mut f64,
    cond: &CondensedElement,
    skel_dofs: &[(usize, f64)],
) {
    let ns = skel_dofs.len();
    for a in 0..ns {
        let (ga, sa) = skel_dofs[a];
        f[ga] += sa * cond.f_tilde[a];
        for b in 0..ns {
            let (gb, sb) = skel_dofs[b];
            if ga > gb {
                continue;
            }
            let idx = k
                .position(ga, gb)
                .expect("symbolic pattern covers every element pair");
            k.val[idx] += sa * sb * cond.k_tilde[(a, b)];
        }
    }
    *c_total += cond.c_elem;
}

/// Full trial coefficient vector of one element, combining signed skeleton
/// values from the global solution with recovered interior values.
pub fn element_coefficients(
    disc: &Discretization,
    asm: &Assembled,
    e: ElementId,
    u: &DVector<f64>,
) -> Result<DVector<f64>, SystemError> {
    let setup = disc.setup_for(e)?;
    let layout = trial_layout(setup.formulation, disc.p);
    let scat = element_scatter(disc.mesh, e, &layout, &asm.dm);
    let u_s = DVector::from_iterator(
        scat.skel_dofs.len(),
        scat.skel_dofs.iter().map(|&(d, s)| s * u[d]),
    );
    let u_l = asm.stash.recover(e as usize, &u_s)?;
    let mut c = DVector::zeros(scat.n_trial);
    for (bi, &colm) in scat.locals.iter().enumerate() {
        c[colm] = u_l[bi];
    }
    for (bi, &colm) in scat.skel_cols.iter().enumerate() {
        c[colm] = u_s[bi];
    }
    Ok(c)
}
