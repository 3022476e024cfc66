//! Penalized IRLS inner loop and the Laplace objective.
//!
//! The conditional-mode problem minimizes
//!
//! ```text
//! pdev(u) = -2 sum_i [ y_i log mu_i + (1-y_i) log(1-mu_i) ] + u'u,
//! mu = logistic(X beta + Z Lambda u)
//! ```
//!
//! via Newton steps on the system `(Lambda'Z'WZLambda + I) du = Lambda'Z'(y-mu) - u`
//! with step halving. The system matrix has an arrow structure for crossed
//! factors: eliminating the factor with more columns first leaves block-
//! diagonal 2x2 (or 1x1) pivots plus a dense Schur complement on the other
//! factor, which is the fill-minimizing elimination order for this pattern.
//! The log-determinant for the Laplace approximation falls out of the same
//! factorization.

use super::design::{BlockShape, DesignMatrices};
use super::{CovarianceBlock, FitError};

/// Result of locating the conditional modes.
#[derive(Debug, Clone)]
pub struct PirlsFit {
    /// Spherical random-effect modes (stacked in factor declaration order).
    pub u: Vec<f64>,
    /// Achieved penalized deviance.
    pub penalized_deviance: f64,
    /// Bernoulli variance weights mu(1-mu) at the mode.
    pub weights: Vec<f64>,
    pub iterations: usize,
}

pub(crate) struct LaplaceParts {
    pub u: Vec<f64>,
    pub pdev: f64,
    pub logdet: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// -2 log-likelihood of a Bernoulli-logit sample at linear predictor eta.
fn deviance(y: &[f64], eta: &[f64]) -> f64 {
    let mut dev = 0.0;
    for i in 0..y.len() {
        dev += 2.0 * (softplus(eta[i]) - y[i] * eta[i]);
    }
    dev
}

fn chol_entries(block: &CovarianceBlock) -> [f64; 3] {
    let c = &block.chol;
    match c.len() {
        1 => [c[0], 0.0, 0.0],
        3 => [c[0], c[1], c[2]],
        _ => unreachable!("covariance block has 1 or 3 entries"),
    }
}

fn validate_zeta(design: &DesignMatrices, zeta: &[CovarianceBlock]) -> Result<(), FitError> {
    if zeta.len() != design.factors.len() {
        return Err(FitError::Config(format!(
            "{} covariance blocks for {} factors",
            zeta.len(),
            design.factors.len()
        )));
    }
    for (f, z) in design.factors.iter().zip(zeta) {
        let want = match f.shape {
            BlockShape::Intercept => 1,
            BlockShape::InterceptSlope => 3,
        };
        if z.chol.len() != want {
            return Err(FitError::Config(format!(
                "factor {} expects {} Cholesky entries, got {}",
                f.name,
                want,
                z.chol.len()
            )));
        }
        let [l11, _, l22] = chol_entries(z);
        if l11 < 0.0 || l22 < 0.0 {
            return Err(FitError::Config(format!(
                "factor {} has negative Cholesky diagonal",
                f.name
            )));
        }
    }
    Ok(())
}

/// 2x2 (or 1x1) symmetric block as [m00, m10, m11].
type Sym = [f64; 3];
/// dense 2x2 block, row-major [r00, r01, r10, r11].
type Rect = [f64; 4];

/// D = L' G L + I for a symmetric raw block G, lower Cholesky L = [a,0;b,c].
fn scale_sym(g: &Sym, l: &[f64; 3], dim: usize) -> Sym {
    let (a, b, c) = (l[0], l[1], l[2]);
    match dim {
        1 => [a * a * g[0] + 1.0, 0.0, 0.0],
        _ => [
            a * a * g[0] + 2.0 * a * b * g[1] + b * b * g[2] + 1.0,
            c * (a * g[1] + b * g[2]),
            c * c * g[2] + 1.0,
        ],
    }
}

/// C = Lb' H La for raw cross block H (db x da).
fn scale_rect(h: &Rect, lb: &[f64; 3], db: usize, la: &[f64; 3], da: usize) -> Rect {
    let (ab, bb, cb) = (lb[0], lb[1], lb[2]);
    let (aa, ba, ca) = (la[0], la[1], la[2]);
    // M = Lb' H  (db x da)
    let mut m = [0.0; 4];
    if db == 1 {
        m[0] = ab * h[0];
        m[1] = ab * h[1];
    } else {
        m[0] = ab * h[0] + bb * h[2];
        m[1] = ab * h[1] + bb * h[3];
        m[2] = cb * h[2];
        m[3] = cb * h[3];
    }
    // C = M La  (db x da)
    let mut c = [0.0; 4];
    if da == 1 {
        c[0] = aa * m[0];
        c[2] = aa * m[2];
    } else {
        c[0] = aa * m[0] + ba * m[1];
        c[1] = ca * m[1];
        c[2] = aa * m[2] + ba * m[3];
        c[3] = ca * m[3];
    }
    c
}

/// Lower Cholesky of a small symmetric block; returns [l0, l1, l2] and the
/// log-determinant contribution.
fn chol_sym(d: &Sym, dim: usize) -> Result<([f64; 3], f64), FitError> {
    if dim == 1 {
        if d[0] <= 0.0 {
            return Err(FitError::InnerFactorization(format!("1x1 pivot {}", d[0])));
        }
        let l0 = d[0].sqrt();
        return Ok(([l0, 0.0, 0.0], 2.0 * l0.ln()));
    }
    if d[0] <= 0.0 {
        return Err(FitError::InnerFactorization(format!("pivot {}", d[0])));
    }
    let l0 = d[0].sqrt();
    let l1 = d[1] / l0;
    let rest = d[2] - l1 * l1;
    if rest <= 0.0 {
        return Err(FitError::InnerFactorization(format!("trailing pivot {rest}")));
    }
    let l2 = rest.sqrt();
    Ok(([l0, l1, l2], 2.0 * (l0.ln() + l2.ln())))
}

/// Solve (L L') x = r for a small block factor.
fn solve_sym(l: &[f64; 3], dim: usize, r: &[f64; 2]) -> [f64; 2] {
    if dim == 1 {
        return [r[0] / (l[0] * l[0]), 0.0];
    }
    let z0 = r[0] / l[0];
    let z1 = (r[1] - l[1] * z0) / l[2];
    let x1 = z1 / l[2];
    let x0 = (z0 - l[1] * x1) / l[0];
    [x0, x1]
}

/// y = C x for a db x da block.
fn rect_apply(c: &Rect, db: usize, da: usize, x: &[f64; 2]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for row in 0..db {
        let mut acc = 0.0;
        for col in 0..da {
            acc += c[row * 2 + col] * x[col];
        }
        out[row] = acc;
    }
    out
}

/// y = C' x for a db x da block (x has db entries, result da).
fn rect_apply_t(c: &Rect, db: usize, da: usize, x: &[f64; 2]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for col in 0..da {
        let mut acc = 0.0;
        for row in 0..db {
            acc += c[row * 2 + col] * x[row];
        }
        out[col] = acc;
    }
    out
}

struct Workspace {
    eta: Vec<f64>,
    mu: Vec<f64>,
    w: Vec<f64>,
    /// Raw G blocks per factor (declaration order).
    g: Vec<Vec<Sym>>,
    /// Raw residual loads per factor.
    r_raw: Vec<Vec<[f64; 2]>>,
    /// Raw cross blocks per pair (role order: rows = other factor,
    /// cols = eliminated-first factor).
    h: Vec<Rect>,
    /// Scaled cross blocks.
    c: Vec<Rect>,
    /// Cholesky factors of the eliminated-first diagonal blocks.
    d_chol: Vec<[f64; 3]>,
    /// Dense Schur complement (lower triangle used).
    s: Vec<f64>,
    /// Scaled per-level effects b = L u, per factor.
    scaled: Vec<Vec<[f64; 2]>>,
}

impl Workspace {
    fn new(design: &DesignMatrices) -> Workspace {
        let n = design.n_obs();
        let n_pairs = design.cross.as_ref().map_or(0, |c| c.pairs.len());
        let g = design
            .factors
            .iter()
            .map(|f| vec![[0.0; 3]; f.n_levels()])
            .collect::<Vec<_>>();
        let r_raw = design
            .factors
            .iter()
            .map(|f| vec![[0.0; 2]; f.n_levels()])
            .collect::<Vec<_>>();
        let scaled = design
            .factors
            .iter()
            .map(|f| vec![[0.0; 2]; f.n_levels()])
            .collect::<Vec<_>>();
        let ef = design.elim_first;
        let m = if design.factors.len() == 2 {
            design.factors[1 - ef].n_cols()
        } else {
            0
        };
        Workspace {
            eta: vec![0.0; n],
            mu: vec![0.0; n],
            w: vec![0.0; n],
            g,
            r_raw,
            h: vec![[0.0; 4]; n_pairs],
            c: vec![[0.0; 4]; n_pairs],
            d_chol: vec![[0.0; 3]; design.factors[ef].n_levels()],
            s: vec![0.0; m * m],
            scaled,
        }
    }
}

/// eta = X beta + Z Lambda u, elementwise mu and deviance.
fn linear_predictor(
    design: &DesignMatrices,
    beta: &[f64],
    lam: &[[f64; 3]],
    u: &[f64],
    ws: &mut Workspace,
) -> f64 {
    for (fi, f) in design.factors.iter().enumerate() {
        let off = design.factor_offset(fi);
        let dim = f.shape.dim();
        let l = &lam[fi];
        for v in 0..f.n_levels() {
            let base = off + v * dim;
            let b = if dim == 1 {
                [l[0] * u[base], 0.0]
            } else {
                [l[0] * u[base], l[1] * u[base] + l[2] * u[base + 1]]
            };
            ws.scaled[fi][v] = b;
        }
    }
    let n = design.n_obs();
    for i in 0..n {
        let mut eta = 0.0;
        for (c, col) in design.x_cols.iter().enumerate() {
            eta += beta[c] * col[i];
        }
        for (fi, f) in design.factors.iter().enumerate() {
            let b = ws.scaled[fi][f.row_level[i] as usize];
            eta += b[0];
            if f.shape.dim() == 2 {
                eta += b[1] * design.t[i];
            }
        }
        ws.eta[i] = eta;
        ws.mu[i] = 1.0 / (1.0 + (-eta).exp());
    }
    deviance(&design.y, &ws.eta)
}

/// Accumulate raw G, H, and residual loads at the current mu, then scale and
/// factor the inner system. Returns the log-determinant.
fn assemble_and_factor(
    design: &DesignMatrices,
    lam: &[[f64; 3]],
    ws: &mut Workspace,
    with_residuals: bool,
) -> Result<f64, FitError> {
    let n = design.n_obs();
    for fi in 0..design.factors.len() {
        for b in ws.g[fi].iter_mut() {
            *b = [0.0; 3];
        }
        for r in ws.r_raw[fi].iter_mut() {
            *r = [0.0; 2];
        }
    }
    for h in ws.h.iter_mut() {
        *h = [0.0; 4];
    }

    let ef = design.elim_first;
    let two = design.factors.len() == 2;
    let of = if two { 1 - ef } else { ef };
    for i in 0..n {
        let w = ws.mu[i] * (1.0 - ws.mu[i]);
        let t = design.t[i];
        let e = design.y[i] - ws.mu[i];
        for (fi, f) in design.factors.iter().enumerate() {
            let lvl = f.row_level[i] as usize;
            let g = &mut ws.g[fi][lvl];
            g[0] += w;
            if f.shape.dim() == 2 {
                g[1] += w * t;
                g[2] += w * t * t;
            }
            if with_residuals {
                let r = &mut ws.r_raw[fi][lvl];
                r[0] += e;
                if f.shape.dim() == 2 {
                    r[1] += e * t;
                }
            }
        }
        if two {
            let cross = design.cross.as_ref().expect("two factors");
            let p = cross.row_pair[i] as usize;
            let h = &mut ws.h[p];
            let db = design.factors[of].shape.dim();
            let da = design.factors[ef].shape.dim();
            // raw z_b z_a' scaled by w; z = (1, t)
            h[0] += w;
            if da == 2 {
                h[1] += w * t;
            }
            if db == 2 {
                h[2] += w * t;
                if da == 2 {
                    h[3] += w * t * t;
                }
            }
        }
    }

    // factor the eliminated-first diagonal blocks
    let da = design.factors[ef].shape.dim();
    let la = &lam[ef];
    let mut logdet = 0.0;
    for v in 0..design.factors[ef].n_levels() {
        let d = scale_sym(&ws.g[ef][v], la, da);
        let (l, ld) = chol_sym(&d, da)?;
        ws.d_chol[v] = l;
        logdet += ld;
    }

    if two {
        let cross = design.cross.as_ref().expect("two factors");
        let db = design.factors[of].shape.dim();
        let lb = &lam[of];
        let m = design.factors[of].n_cols();
        for s in ws.s.iter_mut() {
            *s = 0.0;
        }
        // diagonal E blocks
        for v in 0..design.factors[of].n_levels() {
            let e = scale_sym(&ws.g[of][v], lb, db);
            let base = v * db;
            ws.s[base * m + base] = e[0];
            if db == 2 {
                ws.s[(base + 1) * m + base] = e[1];
                ws.s[(base + 1) * m + (base + 1)] = e[2];
            }
        }
        // scaled cross blocks
        for p in 0..cross.pairs.len() {
            ws.c[p] = scale_rect(&ws.h[p], lb, db, la, da);
        }
        // Schur: S -= C D^{-1} C' accumulated per eliminated-first level
        for v in 0..design.factors[ef].n_levels() {
            let range = cross.first_ranges[v].clone();
            let dl = ws.d_chol[v];
            for p in range.clone() {
                // K_p = D^{-1} C_p' (da x db)
                let cp = ws.c[p];
                let mut k = [0.0; 4];
                for col in 0..db {
                    let rhs = [cp[col], cp[2 + col]]; // column col of C_p'
                    let rhs = if da == 1 { [cp[col], 0.0] } else { rhs };
                    let x = solve_sym(&dl, da, &rhs);
                    k[col] = x[0];
                    k[2 + col] = x[1];
                }
                for q in p..range.end {
                    // block at (row-level b(q), col-level b(p)), b(q) >= b(p)
                    let cq = ws.c[q];
                    let rb = cross.pairs[q].1 as usize * db;
                    let cb = cross.pairs[p].1 as usize * db;
                    for r_ in 0..db {
                        for c_ in 0..db {
                            let row = rb + r_;
                            let col = cb + c_;
                            if row < col {
                                continue;
                            }
                            let mut acc = 0.0;
                            for kk in 0..da {
                                acc += cq[r_ * 2 + kk] * k[c_ + 2 * kk];
                            }
                            ws.s[row * m + col] -= acc;
                        }
                    }
                }
            }
        }
        logdet += dense_chol_in_place(&mut ws.s, m)?;
    }

    Ok(logdet)
}

/// In-place lower Cholesky of a dense symmetric matrix (lower triangle
/// supplied); returns the log-determinant.
fn dense_chol_in_place(s: &mut [f64], m: usize) -> Result<f64, FitError> {
    let mut logdet = 0.0;
    for j in 0..m {
        let mut d = s[j * m + j];
        for k in 0..j {
            d -= s[j * m + k] * s[j * m + k];
        }
        if d <= 0.0 {
            return Err(FitError::InnerFactorization(format!(
                "Schur pivot {d} at {j}"
            )));
        }
        let lj = d.sqrt();
        s[j * m + j] = lj;
        logdet += lj.ln();
        for i in (j + 1)..m {
            let mut v = s[i * m + j];
            for k in 0..j {
                v -= s[i * m + k] * s[j * m + k];
            }
            s[i * m + j] = v / lj;
        }
    }
    Ok(2.0 * logdet)
}

fn dense_chol_solve(l: &[f64], m: usize, rhs: &mut [f64]) {
    for i in 0..m {
        let mut v = rhs[i];
        for k in 0..i {
            v -= l[i * m + k] * rhs[k];
        }
        rhs[i] = v / l[i * m + i];
    }
    for i in (0..m).rev() {
        let mut v = rhs[i];
        for k in (i + 1)..m {
            v -= l[k * m + i] * rhs[k];
        }
        rhs[i] = v / l[i * m + i];
    }
}

/// Solve the factored inner system for the Newton step. The right-hand side
/// is Lambda'Z'(y-mu) - u, assembled here from the raw residual loads.
fn solve_newton(
    design: &DesignMatrices,
    lam: &[[f64; 3]],
    u: &[f64],
    ws: &mut Workspace,
) -> Vec<f64> {
    let ef = design.elim_first;
    let two = design.factors.len() == 2;
    let of = if two { 1 - ef } else { ef };
    let da = design.factors[ef].shape.dim();

    let scale_r = |l: &[f64; 3], dim: usize, r: &[f64; 2]| -> [f64; 2] {
        if dim == 1 {
            [l[0] * r[0], 0.0]
        } else {
            [l[0] * r[0] + l[1] * r[1], l[2] * r[1]]
        }
    };

    // rhs per factor level, in role terms
    let off_a = design.factor_offset(ef);
    let mut rhs_a: Vec<[f64; 2]> = Vec::with_capacity(design.factors[ef].n_levels());
    for v in 0..design.factors[ef].n_levels() {
        let mut r = scale_r(&lam[ef], da, &ws.r_raw[ef][v]);
        let base = off_a + v * da;
        r[0] -= u[base];
        if da == 2 {
            r[1] -= u[base + 1];
        }
        rhs_a.push(r);
    }

    let mut du = vec![0.0; design.q];
    if !two {
        for v in 0..design.factors[ef].n_levels() {
            let x = solve_sym(&ws.d_chol[v], da, &rhs_a[v]);
            let base = off_a + v * da;
            du[base] = x[0];
            if da == 2 {
                du[base + 1] = x[1];
            }
        }
        return du;
    }

    let db = design.factors[of].shape.dim();
    let off_b = design.factor_offset(of);
    let cross = design.cross.as_ref().expect("two factors");
    let m = design.factors[of].n_cols();

    // rb' = rb - C D^{-1} ra
    let mut rb: Vec<f64> = vec![0.0; m];
    for v in 0..design.factors[of].n_levels() {
        let mut r = scale_r(&lam[of], db, &ws.r_raw[of][v]);
        let base = off_b + v * db;
        r[0] -= u[base];
        if db == 2 {
            r[1] -= u[base + 1];
        }
        rb[v * db] = r[0];
        if db == 2 {
            rb[v * db + 1] = r[1];
        }
    }
    let mut p1: Vec<[f64; 2]> = Vec::with_capacity(design.factors[ef].n_levels());
    for v in 0..design.factors[ef].n_levels() {
        p1.push(solve_sym(&ws.d_chol[v], da, &rhs_a[v]));
    }
    for (p, &(a_lvl, b_lvl)) in cross.pairs.iter().enumerate() {
        let contrib = rect_apply(&ws.c[p], db, da, &p1[a_lvl as usize]);
        let base = b_lvl as usize * db;
        rb[base] -= contrib[0];
        if db == 2 {
            rb[base + 1] -= contrib[1];
        }
    }
    dense_chol_solve(&ws.s, m, &mut rb);
    for v in 0..design.factors[of].n_levels() {
        let base = off_b + v * db;
        du[base] = rb[v * db];
        if db == 2 {
            du[base + 1] = rb[v * db + 1];
        }
    }
    // xa = D^{-1} (ra - C' xb)
    let mut ta = rhs_a;
    for (p, &(a_lvl, b_lvl)) in cross.pairs.iter().enumerate() {
        let xb = [
            rb[b_lvl as usize * db],
            if db == 2 { rb[b_lvl as usize * db + 1] } else { 0.0 },
        ];
        let contrib = rect_apply_t(&ws.c[p], db, da, &xb);
        ta[a_lvl as usize][0] -= contrib[0];
        if da == 2 {
            ta[a_lvl as usize][1] -= contrib[1];
        }
    }
    for v in 0..design.factors[ef].n_levels() {
        let x = solve_sym(&ws.d_chol[v], da, &ta[v]);
        let base = off_a + v * da;
        du[base] = x[0];
        if da == 2 {
            du[base + 1] = x[1];
        }
    }
    du
}

/// Penalized deviance at an arbitrary u; exposed for oracle checks.
pub fn penalized_deviance(
    design: &DesignMatrices,
    beta: &[f64],
    zeta: &[CovarianceBlock],
    u: &[f64],
) -> Result<f64, FitError> {
    validate_zeta(design, zeta)?;
    if u.len() != design.q || beta.len() != design.n_fixed() {
        return Err(FitError::Config("dimension mismatch in penalized_deviance".into()));
    }
    let lam: Vec<[f64; 3]> = zeta.iter().map(chol_entries).collect();
    let mut ws = Workspace::new(design);
    let dev = linear_predictor(design, beta, &lam, u, &mut ws);
    Ok(dev + u.iter().map(|v| v * v).sum::<f64>())
}

fn pirls_core(
    design: &DesignMatrices,
    beta: &[f64],
    lam: &[[f64; 3]],
    u0: &[f64],
    tol: f64,
    max_iter: usize,
    ws: &mut Workspace,
) -> Result<(Vec<f64>, f64, usize), FitError> {
    let mut u = u0.to_vec();
    let mut dev = linear_predictor(design, beta, lam, &u, ws);
    let mut pdev = dev + u.iter().map(|v| v * v).sum::<f64>();
    let _ = dev;

    for iter in 1..=max_iter {
        assemble_and_factor(design, lam, ws, true)?;
        let du = solve_newton(design, lam, &u, ws);
        let mut step = 1.0;
        let mut accepted = false;
        let mut u_try = vec![0.0; u.len()];
        for _ in 0..30 {
            for (i, ut) in u_try.iter_mut().enumerate() {
                *ut = u[i] + step * du[i];
            }
            dev = linear_predictor(design, beta, lam, &u_try, ws);
            let pdev_try = dev + u_try.iter().map(|v| v * v).sum::<f64>();
            if pdev_try < pdev {
                let delta = pdev - pdev_try;
                u.copy_from_slice(&u_try);
                pdev = pdev_try;
                accepted = true;
                if delta <= tol * (pdev.abs() + 1.0) {
                    return Ok((u, pdev, iter));
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // cannot decrease a strictly convex objective further: at the
            // mode up to rounding; restore eta/mu at the accepted u
            linear_predictor(design, beta, lam, &u, ws);
            return Ok((u, pdev, iter));
        }
    }
    Err(FitError::PirlsNoConvergence { iterations: max_iter, last: pdev })
}

/// Locate the conditional modes of the random effects at fixed (beta, zeta).
///
/// The returned objective never exceeds the objective at `u0`.
pub fn pirls(
    design: &DesignMatrices,
    beta: &[f64],
    zeta: &[CovarianceBlock],
    u0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PirlsFit, FitError> {
    validate_zeta(design, zeta)?;
    if u0.len() != design.q || beta.len() != design.n_fixed() {
        return Err(FitError::Config("dimension mismatch in pirls".into()));
    }
    let lam: Vec<[f64; 3]> = zeta.iter().map(chol_entries).collect();
    let mut ws = Workspace::new(design);
    let (u, pdev, iterations) = pirls_core(design, beta, &lam, u0, tol, max_iter, &mut ws)?;
    linear_predictor(design, beta, &lam, &u, &mut ws);
    let weights: Vec<f64> = ws.mu.iter().map(|&m| m * (1.0 - m)).collect();
    Ok(PirlsFit { u, penalized_deviance: pdev, weights, iterations })
}

pub(crate) fn laplace_parts(
    design: &DesignMatrices,
    beta: &[f64],
    zeta: &[CovarianceBlock],
    u0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<LaplaceParts, FitError> {
    validate_zeta(design, zeta)?;
    if u0.len() != design.q || beta.len() != design.n_fixed() {
        return Err(FitError::Config("dimension mismatch in laplace".into()));
    }
    let lam: Vec<[f64; 3]> = zeta.iter().map(chol_entries).collect();
    let mut ws = Workspace::new(design);
    let (u, pdev, iterations) = pirls_core(design, beta, &lam, u0, tol, max_iter, &mut ws)?;
    // mu at the mode, then one factorization for the log-determinant
    linear_predictor(design, beta, &lam, &u, &mut ws);
    let logdet = assemble_and_factor(design, &lam, &mut ws, false)?;
    let weights: Vec<f64> = ws.mu.iter().map(|&m| m * (1.0 - m)).collect();
    Ok(LaplaceParts { u, pdev, logdet, weights, iterations })
}

/// Laplace-approximate deviance: pdev at the conditional mode plus
/// log det(Lambda'Z'WZLambda + I) at the mode's weights.
pub fn laplace_deviance(
    design: &DesignMatrices,
    beta: &[f64],
    zeta: &[CovarianceBlock],
    tol: f64,
    max_iter: usize,
) -> Result<f64, FitError> {
    let u0 = vec![0.0; design.q];
    let parts = laplace_parts(design, beta, zeta, &u0, tol, max_iter)?;
    Ok(parts.pdev + parts.logdet)
}

/// log det(Lambda'Z'WZLambda + I) at externally supplied weights; used by
/// scale diagnostics and tests.
pub(crate) fn logdet_at_weights(
    design: &DesignMatrices,
    zeta: &[CovarianceBlock],
    weights: &[f64],
) -> Result<f64, FitError> {
    validate_zeta(design, zeta)?;
    let lam: Vec<[f64; 3]> = zeta.iter().map(chol_entries).collect();
    let mut ws = Workspace::new(design);
    // mu(1-mu) = w has two roots; pick mu in (0, 1/2], irrelevant for G.
    for (i, &w) in weights.iter().enumerate() {
        let w = w.clamp(0.0, 0.25);
        ws.mu[i] = 0.5 * (1.0 - (1.0 - 4.0 * w).max(0.0).sqrt());
    }
    assemble_and_factor(design, &lam, &mut ws, false)
}
