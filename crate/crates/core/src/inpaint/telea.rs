//! Fast-marching inpainting (Telea 2004).
//!
//! Pixels are filled in order of their distance from the known region; each
//! new value is a weighted first-order extrapolation from already-known
//! pixels in a small neighborhood.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::grid::{ColorImage, Grid, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Known,
    Band,
    Inside,
    /// Neither a source nor a target; ignored entirely.
    Blocked,
}

#[derive(PartialEq)]
struct Entry {
    t: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on arrival time, then on index for a deterministic order.
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Fills every `fill` pixel of `image`. Pixels in `blocked` are neither used
/// as sources nor written. `radius` is the neighborhood radius in pixels.
pub fn telea_inpaint(image: &mut ColorImage, fill: &Mask, blocked: &Mask, radius: usize) {
    let (w, h) = image.dims();
    let mut state = Grid::from_fn(w, h, |x, y| {
        if *fill.get(x, y) {
            State::Inside
        } else if *blocked.get(x, y) {
            State::Blocked
        } else {
            State::Known
        }
    });
    let mut t = Grid::filled(w, h, f64::INFINITY);
    let mut heap = BinaryHeap::new();

    for y in 0..h {
        for x in 0..w {
            if *state.get(x, y) != State::Known {
                continue;
            }
            t.set(x, y, 0.0);
            if image
                .neighbors4(x, y)
                .any(|(nx, ny)| *state.get(nx, ny) == State::Inside)
            {
                state.set(x, y, State::Band);
                heap.push(Entry {
                    t: 0.0,
                    index: image.index(x, y),
                });
            }
        }
    }

    while let Some(Entry { index, .. }) = heap.pop() {
        let (x, y) = image.coords(index);
        if *state.get(x, y) == State::Known {
            continue;
        }
        state.set(x, y, State::Known);
        let neighbors: Vec<_> = image.neighbors4(x, y).collect();
        for (nx, ny) in neighbors {
            match *state.get(nx, ny) {
                State::Inside => {
                    let arrival = arrival_time(&t, &state, nx, ny);
                    t.set(nx, ny, arrival);
                    let value = extrapolate(image, &t, &state, nx, ny, radius);
                    image.set(nx, ny, value);
                    state.set(nx, ny, State::Band);
                    heap.push(Entry {
                        t: arrival,
                        index: image.index(nx, ny),
                    });
                }
                State::Band => {
                    let arrival = arrival_time(&t, &state, nx, ny);
                    if arrival < *t.get(nx, ny) {
                        t.set(nx, ny, arrival);
                        heap.push(Entry {
                            t: arrival,
                            index: image.index(nx, ny),
                        });
                    }
                }
                _ => {}
            }
        }
    }
}

fn has_value(state: &Grid<State>, x: i64, y: i64) -> bool {
    matches!(state.checked(x, y), Some(State::Known) | Some(State::Band))
}

fn time_at(t: &Grid<f64>, state: &Grid<State>, x: i64, y: i64) -> f64 {
    if has_value(state, x, y) {
        *t.get(x as usize, y as usize)
    } else {
        f64::INFINITY
    }
}

/// Eikonal update from one horizontal and one vertical neighbor.
fn solve_pair(a: f64, b: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => {
            if (a - b).abs() >= 1.0 {
                1.0 + a.min(b)
            } else {
                0.5 * (a + b + (2.0 - (a - b) * (a - b)).sqrt())
            }
        }
        (true, false) => 1.0 + a,
        (false, true) => 1.0 + b,
        (false, false) => f64::INFINITY,
    }
}

fn arrival_time(t: &Grid<f64>, state: &Grid<State>, x: usize, y: usize) -> f64 {
    let (xi, yi) = (x as i64, y as i64);
    let l = time_at(t, state, xi - 1, yi);
    let r = time_at(t, state, xi + 1, yi);
    let u = time_at(t, state, xi, yi - 1);
    let d = time_at(t, state, xi, yi + 1);
    solve_pair(l, u)
        .min(solve_pair(r, u))
        .min(solve_pair(l, d))
        .min(solve_pair(r, d))
}

fn gradient<F: Fn(i64, i64) -> Option<f64>>(sample: F, x: i64, y: i64) -> (f64, f64) {
    let axis = |dx: i64, dy: i64| -> f64 {
        let c = sample(x, y);
        match (sample(x - dx, y - dy), sample(x + dx, y + dy)) {
            (Some(a), Some(b)) => 0.5 * (b - a),
            (None, Some(b)) => c.map_or(0.0, |c| b - c),
            (Some(a), None) => c.map_or(0.0, |c| c - a),
            (None, None) => 0.0,
        }
    };
    (axis(1, 0), axis(0, 1))
}

fn extrapolate(
    image: &ColorImage,
    t: &Grid<f64>,
    state: &Grid<State>,
    x: usize,
    y: usize,
    radius: usize,
) -> [u8; 3] {
    let (xi, yi) = (x as i64, y as i64);
    let tp = *t.get(x, y);
    let grad_t = gradient(
        |sx, sy| has_value(state, sx, sy).then(|| *t.get(sx as usize, sy as usize)),
        xi,
        yi,
    );
    let r = radius as i64;
    let mut acc = [0.0f64; 3];
    let mut wsum = 0.0;
    for qy in (yi - r)..=(yi + r) {
        for qx in (xi - r)..=(xi + r) {
            if (qx, qy) == (xi, yi) || !has_value(state, qx, qy) {
                continue;
            }
            let (rx, ry) = ((xi - qx) as f64, (yi - qy) as f64);
            let len2 = rx * rx + ry * ry;
            if len2 > (r * r) as f64 {
                continue;
            }
            let len = len2.sqrt();
            let mut dir = (rx * grad_t.0 + ry * grad_t.1).abs() / len;
            if dir < 1e-6 {
                dir = 1e-6;
            }
            let tq = *t.get(qx as usize, qy as usize);
            let lev = 1.0 / (1.0 + (tq - tp).abs());
            let dst = 1.0 / len2;
            let weight = dir * lev * dst;
            let q = image.get(qx as usize, qy as usize);
            for c in 0..3 {
                let g = gradient(
                    |sx, sy| {
                        matches!(state.checked(sx, sy), Some(State::Known))
                            .then(|| image.get(sx as usize, sy as usize)[c] as f64)
                    },
                    qx,
                    qy,
                );
                acc[c] += weight * (q[c] as f64 + g.0 * rx + g.1 * ry);
            }
            wsum += weight;
        }
    }
    if wsum == 0.0 {
        return [0, 0, 0];
    }
    acc.map(|v| (v / wsum).round().clamp(0.0, 255.0) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_surround_fills_with_constant() {
        let mut img = Grid::filled(7, 7, [40, 80, 120]);
        img.set(3, 3, [0, 0, 0]);
        let mut fill = Grid::filled(7, 7, false);
        fill.set(3, 3, true);
        let blocked = Grid::filled(7, 7, false);
        telea_inpaint(&mut img, &fill, &blocked, 5);
        assert_eq!(*img.get(3, 3), [40, 80, 120]);
    }

    #[test]
    fn linear_ramp_is_continued() {
        let w = 21;
        let mut img = Grid::from_fn(w, 9, |x, _| [(x * 10) as u8, 0, 0]);
        let mut fill = Grid::filled(w, 9, false);
        for y in 3..6 {
            for x in 9..12 {
                fill.set(x, y, true);
                img.set(x, y, [0, 0, 0]);
            }
        }
        let blocked = Grid::filled(w, 9, false);
        telea_inpaint(&mut img, &fill, &blocked, 5);
        for y in 3..6 {
            for x in 9..12 {
                let v = img.get(x, y)[0] as i32;
                assert!((v - (x * 10) as i32).abs() <= 6, "({x},{y}) = {v}");
            }
        }
    }

    #[test]
    fn blocked_pixels_are_untouched_and_unused() {
        let mut img = Grid::filled(5, 1, [100, 100, 100]);
        img.set(0, 0, [0, 0, 0]);
        img.set(1, 0, [255, 255, 255]);
        let mut fill = Grid::filled(5, 1, false);
        fill.set(2, 0, true);
        let mut blocked = Grid::filled(5, 1, false);
        blocked.set(1, 0, true);
        telea_inpaint(&mut img, &fill, &blocked, 3);
        assert_eq!(*img.get(1, 0), [255, 255, 255]);
        assert_ne!(img.get(2, 0)[0], 255);
    }
}
