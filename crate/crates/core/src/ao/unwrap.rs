//! Residue detection, branch cuts and quality-guided phase unwrapping.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, wide, Real};

/// Wraps into `(−π, π]`.
pub fn wrap<T: Real>(x: T) -> T {
    let tau = T::TAU();
    x - tau * ((x - T::PI()) / tau).ceil()
}

/// Wrapped difference `φ_b − φ_a` for 4-neighbours, antisymmetric by
/// construction so that loop sums are exact multiples of 2π.
#[inline]
fn edge_diff<T: Real>(phase: &[T], a: usize, b: usize) -> T {
    if a < b {
        wrap(phase[b] - phase[a])
    } else {
        -wrap(phase[a] - phase[b])
    }
}

/// A nonzero winding of the wrapped gradient around the 2×2 plaquette whose
/// top-left pixel is `(ix, iy)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Residue {
    pub ix: usize,
    pub iy: usize,
    pub charge: i8,
}

/// Counts reported after unwrapping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnwrapDiagnostics {
    pub residues: usize,
    pub positive: usize,
    pub negative: usize,
    pub cut_pixels: usize,
    pub region_pixels: usize,
    pub unwrapped_pixels: usize,
    pub unwrapped_fraction: f64,
}

/// Unwrapped phase `Φ = φ + 2πk` with the integer map `k` kept alongside.
#[derive(Clone, Debug)]
pub struct Unwrapped<T: Real> {
    pub phase: Vec<T>,
    pub multiples: Vec<i32>,
    pub cuts: Vec<bool>,
    pub reached: Vec<bool>,
    pub residues: Vec<Residue>,
    pub diagnostics: UnwrapDiagnostics,
}

/// Residues of every plaquette fully inside `region`.
pub fn find_residues<T: Real>(phase: &[T], n: usize, region: &[bool]) -> Vec<Residue> {
    let mut out = Vec::new();
    let tau = std::f64::consts::TAU;
    for iy in 0..n - 1 {
        for ix in 0..n - 1 {
            let p00 = iy * n + ix;
            let (p10, p01, p11) = (p00 + 1, p00 + n, p00 + n + 1);
            if !(region[p00] && region[p10] && region[p01] && region[p11]) {
                continue;
            }
            let s = edge_diff(phase, p00, p10) + edge_diff(phase, p10, p11) + edge_diff(phase, p11, p01)
                + edge_diff(phase, p01, p00);
            let q = (wide(s) / tau).round() as i8;
            if q != 0 {
                out.push(Residue { ix, iy, charge: q });
            }
        }
    }
    out
}

fn draw_line(cuts: &mut [bool], n: usize, (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as usize) < n && (y as usize) < n {
            cuts[y as usize * n + x as usize] = true;
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Goldstein branch cuts: each residue grows a search box until the
/// enclosed charge is balanced by other residues or the region border.
pub fn branch_cuts(residues: &[Residue], n: usize, region: &[bool]) -> Vec<bool> {
    let mut cuts = vec![false; n * n];
    let mut at = vec![usize::MAX; n * n];
    for (k, r) in residues.iter().enumerate() {
        at[r.iy * n + r.ix] = k;
    }
    let mut balanced = vec![false; residues.len()];
    let mut tree = vec![usize::MAX; residues.len()];
    let border = |x: i64, y: i64| x < 0 || y < 0 || x >= n as i64 || y >= n as i64 || !region[y as usize * n + x as usize];

    for start in 0..residues.len() {
        if balanced[start] {
            continue;
        }
        let mut active = vec![start];
        tree[start] = start;
        let mut charge = residues[start].charge as i32;
        'grow: for h in 1..=n as i64 {
            let mut k = 0;
            while k < active.len() {
                let a = residues[active[k]];
                let (ax, ay) = (a.ix as i64, a.iy as i64);
                for y in ay - h..=ay + h {
                    for x in ax - h..=ax + h {
                        if border(x, y) {
                            draw_line(&mut cuts, n, (ax, ay), (x, y));
                            charge = 0;
                            break 'grow;
                        }
                        let b = at[y as usize * n + x as usize];
                        if b == usize::MAX || tree[b] == start {
                            continue;
                        }
                        draw_line(&mut cuts, n, (ax, ay), (x, y));
                        if !balanced[b] {
                            charge += residues[b].charge as i32;
                        }
                        tree[b] = start;
                        active.push(b);
                        if charge == 0 {
                            break 'grow;
                        }
                    }
                }
                k += 1;
            }
        }
        debug_assert_eq!(charge, 0);
        for &a in &active {
            balanced[a] = true;
        }
    }
    cuts
}

#[derive(PartialEq)]
struct Candidate {
    quality: f64,
    index: usize,
    from: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.quality
            .total_cmp(&other.quality)
            .then_with(|| other.index.cmp(&self.index))
            .then_with(|| other.from.cmp(&self.from))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn neighbours(idx: usize, n: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (idx % n, idx / n);
    let mut out = [usize::MAX; 4];
    if x > 0 {
        out[0] = idx - 1;
    }
    if x + 1 < n {
        out[1] = idx + 1;
    }
    if y > 0 {
        out[2] = idx - n;
    }
    if y + 1 < n {
        out[3] = idx + n;
    }
    out.into_iter().filter(|&v| v != usize::MAX)
}

/// Unwraps `wrapped` over `region` (row-major `n × n`).
///
/// Branch cuts are placed between residues first; the flood fill starts at
/// the highest-quality pixel, always extends to the best-quality frontier
/// pixel, and never crosses a cut. Cut pixels are then filled from already
/// unwrapped neighbours. Pixels the fill cannot reach keep their wrapped
/// value.
pub fn unwrap<T: Real>(wrapped: &[T], quality: &[T], region: &[bool], n: usize) -> Unwrapped<T> {
    let len = n * n;
    assert_eq!(wrapped.len(), len);
    let residues = find_residues(wrapped, n, region);
    let cuts = branch_cuts(&residues, n, region);
    let open = |i: usize| region[i] && !cuts[i];

    let mut multiples = vec![0i32; len];
    let mut reached = vec![false; len];
    let tau = std::f64::consts::TAU;
    let step = |k_from: i32, from: usize, to: usize| -> i32 {
        let target = wide(wrapped[from]) + tau * k_from as f64 + wide(edge_diff(wrapped, from, to));
        ((target - wide(wrapped[to])) / tau).round() as i32
    };

    let seed = (0..len)
        .filter(|&i| open(i))
        .max_by(|&a, &b| wide(quality[a]).total_cmp(&wide(quality[b])).then_with(|| b.cmp(&a)));
    if let Some(seed) = seed {
        reached[seed] = true;
        let mut heap = BinaryHeap::new();
        let push = |heap: &mut BinaryHeap<Candidate>, from: usize, reached: &[bool]| {
            for nb in neighbours(from, n) {
                if open(nb) && !reached[nb] {
                    heap.push(Candidate { quality: wide(quality[nb]), index: nb, from });
                }
            }
        };
        push(&mut heap, seed, &reached);
        while let Some(Candidate { index, from, .. }) = heap.pop() {
            if reached[index] {
                continue;
            }
            multiples[index] = step(multiples[from], from, index);
            reached[index] = true;
            push(&mut heap, index, &reached);
        }
    }

    // cut pixels take their value from an unwrapped neighbour
    let mut pending: Vec<usize> = (0..len).filter(|&i| region[i] && cuts[i]).collect();
    loop {
        let mut progressed = false;
        pending.retain(|&i| {
            let from = neighbours(i, n)
                .filter(|&nb| reached[nb])
                .max_by(|&a, &b| wide(quality[a]).total_cmp(&wide(quality[b])).then_with(|| b.cmp(&a)));
            match from {
                Some(f) => {
                    multiples[i] = step(multiples[f], f, i);
                    reached[i] = true;
                    progressed = true;
                    false
                }
                None => true,
            }
        });
        if !progressed {
            break;
        }
    }

    let phase: Vec<T> = wrapped
        .iter()
        .zip(&multiples)
        .map(|(&p, &k)| p + T::TAU() * lit::<T>(k as f64))
        .collect();
    let region_pixels = region.iter().filter(|&&r| r).count();
    let unwrapped_pixels = reached.iter().filter(|&&r| r).count();
    let positive = residues.iter().filter(|r| r.charge > 0).count();
    let diagnostics = UnwrapDiagnostics {
        residues: residues.len(),
        positive,
        negative: residues.len() - positive,
        cut_pixels: (0..len).filter(|&i| region[i] && cuts[i]).count(),
        region_pixels,
        unwrapped_pixels,
        unwrapped_fraction: if region_pixels == 0 { 0.0 } else { unwrapped_pixels as f64 / region_pixels as f64 },
    };
    Unwrapped { phase, multiples, cuts, reached, residues, diagnostics }
}
