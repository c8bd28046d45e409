//! Bounded two-parameter Nelder-Mead with grid-seeded restarts.

/// Result of one local descent.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Descent {
    pub x: [f64; 2],
    pub f: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Bounds {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Bounds {
    fn scale(&self, u: [f64; 2]) -> [f64; 2] {
        [
            self.lo[0] + u[0].clamp(0.0, 1.0) * (self.hi[0] - self.lo[0]),
            self.lo[1] + u[1].clamp(0.0, 1.0) * (self.hi[1] - self.lo[1]),
        ]
    }
}

/// Minimize `f` over the box starting from normalized point `u0`.
pub(crate) fn descend<F: Fn([f64; 2]) -> f64>(
    f: &F,
    bounds: &Bounds,
    u0: [f64; 2],
    rel_tol: f64,
    max_iter: usize,
) -> Descent {
    let eval = |u: [f64; 2]| f(bounds.scale(u));
    let clamp = |u: [f64; 2]| [u[0].clamp(0.0, 1.0), u[1].clamp(0.0, 1.0)];
    let step = 0.05;
    let mut simplex = [clamp(u0), clamp([u0[0] + step, u0[1]]), clamp([u0[0], u0[1] + step])];
    // a start on a box corner collapses the simplex; push inward
    if simplex[1] == simplex[0] {
        simplex[1] = clamp([u0[0] - step, u0[1]]);
    }
    if simplex[2] == simplex[0] {
        simplex[2] = clamp([u0[0], u0[1] - step]);
    }
    let mut fv = simplex.map(eval);

    let mut converged = false;
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| fv[i].total_cmp(&fv[j]));
        simplex = order.map(|i| simplex[i]);
        fv = order.map(|i| fv[i]);

        let spread = fv[2] - fv[0];
        let diam =
            simplex.iter().map(|p| (p[0] - simplex[0][0]).abs().max((p[1] - simplex[0][1]).abs())).fold(0.0, f64::max);
        if spread <= rel_tol * fv[0].abs() + 1e-20 && diam <= 1e-9 {
            converged = true;
            break;
        }

        let c = [0.5 * (simplex[0][0] + simplex[1][0]), 0.5 * (simplex[0][1] + simplex[1][1])];
        let along = |t: f64| clamp([c[0] + t * (simplex[2][0] - c[0]), c[1] + t * (simplex[2][1] - c[1])]);

        let xr = along(-1.0);
        let fr = eval(xr);
        if fr < fv[0] {
            let xe = along(-2.0);
            let fe = eval(xe);
            if fe < fr {
                simplex[2] = xe;
                fv[2] = fe;
            } else {
                simplex[2] = xr;
                fv[2] = fr;
            }
            continue;
        }
        if fr < fv[1] {
            simplex[2] = xr;
            fv[2] = fr;
            continue;
        }
        let (xc, fc) = if fr < fv[2] {
            let x = along(-0.5);
            (x, eval(x))
        } else {
            let x = along(0.5);
            (x, eval(x))
        };
        if fc < fv[2].min(fr) {
            simplex[2] = xc;
            fv[2] = fc;
            continue;
        }
        // shrink toward the best vertex
        for k in 1..3 {
            simplex[k] = [
                simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
            ];
            fv[k] = eval(simplex[k]);
        }
    }
    let best = (0..3).min_by(|&i, &j| fv[i].total_cmp(&fv[j])).unwrap_or(0);
    Descent { x: bounds.scale(simplex[best]), f: fv[best], converged }
}

/// Run `starts` descents seeded on a square grid and keep the best.
pub(crate) fn multistart<F: Fn([f64; 2]) -> f64>(
    f: &F,
    bounds: &Bounds,
    starts: usize,
    rel_tol: f64,
    max_iter: usize,
) -> Descent {
    let side = (starts.max(1) as f64).sqrt().ceil() as usize;
    let mut best: Option<Descent> = None;
    let mut launched = 0;
    'outer: for i in 0..side {
        for j in 0..side {
            if launched == starts.max(1) {
                break 'outer;
            }
            launched += 1;
            let u0 = [(i as f64 + 0.5) / side as f64, (j as f64 + 0.5) / side as f64];
            let d = descend(f, bounds, u0, rel_tol, max_iter);
            if best.is_none_or(|b| d.f < b.f || (d.f == b.f && d.converged && !b.converged)) {
                best = Some(d);
            }
        }
    }
    best.expect("at least one start")
}
