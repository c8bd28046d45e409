//! Uniform-grid broad phase and the exact segment/cylinder test.

use super::{Building, Point3, Region};

/// Exact open-segment versus solid vertical cylinder test.
///
/// The cylinder occupies `{(x, y, z) : |(x, y) - c| < r, 0 <= z < h}`. The
/// segment is `p + t (q - p)` for `t` in the open interval `(0, 1)`. Both
/// conditions are strict, so grazing contact does not block.
pub fn cylinder_blocks(b: &Building, p: Point3, q: Point3) -> bool {
    let (dx, dy, dz) = (q.x - p.x, q.y - p.y, q.z - p.z);
    let fx = p.x - b.x;
    let fy = p.y - b.y;
    let a = dx * dx + dy * dy;
    let c = fx * fx + fy * fy - b.radius * b.radius;

    let (mut lo, mut hi) = (0.0f64, 1.0f64);

    if a == 0.0 {
        if c >= 0.0 {
            return false;
        }
    } else {
        let bq = 2.0 * (fx * dx + fy * dy);
        let disc = bq * bq - 4.0 * a * c;
        if disc <= 0.0 {
            return false;
        }
        let sq = disc.sqrt();
        let qq = -0.5 * (bq + bq.signum() * sq);
        let (r1, r2) = if qq == 0.0 {
            (-sq / (2.0 * a), sq / (2.0 * a))
        } else {
            let r1 = qq / a;
            let r2 = c / qq;
            if r1 < r2 {
                (r1, r2)
            } else {
                (r2, r1)
            }
        };
        lo = lo.max(r1);
        hi = hi.min(r2);
    }

    if dz > 0.0 {
        hi = hi.min((b.height - p.z) / dz);
    } else if dz < 0.0 {
        lo = lo.max((b.height - p.z) / dz);
    } else if p.z >= b.height {
        return false;
    }
    lo < hi
}

#[derive(Debug, Clone)]
pub(crate) struct GridIndex {
    ox: f64,
    oy: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
    cell_max_h: Vec<f64>,
    max_h: f64,
}

impl GridIndex {
    pub(crate) fn build(region: &Region, buildings: &[Building]) -> Self {
        let r_max = buildings.iter().map(|b| b.radius).fold(0.0, f64::max);
        let lo_x = region.x_min - r_max;
        let lo_y = region.y_min - r_max;
        let w = region.width() + 2.0 * r_max;
        let h = region.height() + 2.0 * r_max;
        // ~2 buildings' diameter per cell keeps lists short at urban densities
        let cell = (4.0 * r_max).max(8.0);
        let nx = ((w / cell).ceil() as usize).max(1);
        let ny = ((h / cell).ceil() as usize).max(1);
        let mut cells = vec![Vec::new(); nx * ny];
        let mut cell_max_h = vec![0.0f64; nx * ny];
        let clampi = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        for (k, b) in buildings.iter().enumerate() {
            let i0 = clampi((b.x - b.radius - lo_x) / cell, nx);
            let i1 = clampi((b.x + b.radius - lo_x) / cell, nx);
            let j0 = clampi((b.y - b.radius - lo_y) / cell, ny);
            let j1 = clampi((b.y + b.radius - lo_y) / cell, ny);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * nx + i].push(k as u32);
                    let m = &mut cell_max_h[j * nx + i];
                    *m = m.max(b.height);
                }
            }
        }
        let max_h = buildings.iter().map(|b| b.height).fold(0.0, f64::max);
        GridIndex { ox: lo_x, oy: lo_y, cell, nx, ny, cells, cell_max_h, max_h }
    }

    pub(crate) fn segment_blocked(&self, buildings: &[Building], p: Point3, q: Point3) -> bool {
        if buildings.is_empty() {
            return false;
        }
        let (dx, dy, dz) = (q.x - p.x, q.y - p.y, q.z - p.z);

        // only the part of the segment below the tallest roof can be blocked
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        if dz > 0.0 {
            t1 = t1.min((self.max_h - p.z) / dz);
        } else if dz < 0.0 {
            t0 = t0.max((self.max_h - p.z) / dz);
        } else if p.z >= self.max_h {
            return false;
        }
        if t0 >= t1 {
            return false;
        }

        // clip to the index box (Liang-Barsky)
        let x_hi = self.ox + self.nx as f64 * self.cell;
        let y_hi = self.oy + self.ny as f64 * self.cell;
        for (d, s, lo, hi) in [(dx, p.x, self.ox, x_hi), (dy, p.y, self.oy, y_hi)] {
            if d == 0.0 {
                if s < lo || s > hi {
                    return false;
                }
            } else {
                let (mut a, mut b) = ((lo - s) / d, (hi - s) / d);
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                t0 = t0.max(a);
                t1 = t1.min(b);
            }
        }
        if t0 > t1 {
            return false;
        }

        let fx = |t: f64| (p.x + t * dx - self.ox) / self.cell;
        let fy = |t: f64| (p.y + t * dy - self.oy) / self.cell;
        let clampi = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        let tm = 0.5 * (t0 + t1);
        // start cell from a point nudged inside the clipped interval
        let t_start = t0 + (tm - t0) * 1e-9;
        let mut ix = clampi(fx(t_start), self.nx) as i64;
        let mut iy = clampi(fy(t_start), self.ny) as i64;

        let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
        let next_boundary = |i: i64, step: i64, origin: f64, s: f64, d: f64| -> f64 {
            if d == 0.0 {
                f64::INFINITY
            } else {
                let edge = origin + (i + i64::from(step > 0)) as f64 * self.cell;
                (edge - s) / d
            }
        };
        let mut tmax_x = next_boundary(ix, step_x, self.ox, p.x, dx);
        let mut tmax_y = next_boundary(iy, step_y, self.oy, p.y, dy);
        let tdelta_x = if dx == 0.0 { f64::INFINITY } else { self.cell / dx.abs() };
        let tdelta_y = if dy == 0.0 { f64::INFINITY } else { self.cell / dy.abs() };

        let mut t_cur = t0;
        loop {
            let t_next = tmax_x.min(tmax_y).min(t1);
            let k = iy as usize * self.nx + ix as usize;
            let z_low = (p.z + t_cur * dz).min(p.z + t_next * dz);
            if z_low < self.cell_max_h[k]
                && self.cells[k].iter().any(|&bi| cylinder_blocks(&buildings[bi as usize], p, q))
            {
                return true;
            }
            if t_next >= t1 {
                return false;
            }
            if tmax_x < tmax_y {
                ix += step_x;
                t_cur = tmax_x;
                tmax_x += tdelta_x;
            } else {
                iy += step_y;
                t_cur = tmax_y;
                tmax_y += tdelta_y;
            }
            if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
                return false;
            }
        }
    }
}
