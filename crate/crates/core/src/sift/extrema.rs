use super::scale_space::DogPyramid;
use super::{Keypoint, SiftParams};

/// Integer scale-space location of a DoG extremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawExtremum {
    pub octave: usize,
    pub layer: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Unconverged,
    LowContrast,
    EdgeLike,
}

/// Strict 26-neighbour extrema over layers `1..=scales_per_octave`,
/// excluding a one-pixel spatial border.
pub fn detect_extrema(dog: &DogPyramid, p: &SiftParams) -> Vec<RawExtremum> {
    let threshold = p.prefilter_threshold() as f32;
    let mut out = Vec::new();
    for (o, layers) in dog.octaves.iter().enumerate() {
        let last = (layers.len().saturating_sub(2)).min(p.scales_per_octave);
        for layer in 1..=last {
            let (below, here, above) = (&layers[layer - 1], &layers[layer], &layers[layer + 1]);
            let (w, h) = (here.width(), here.height());
            if w < 3 || h < 3 {
                continue;
            }
            for row in 1..h - 1 {
                for col in 1..w - 1 {
                    let v = here.get(col, row);
                    if v.abs() <= threshold {
                        continue;
                    }
                    if is_strict_extremum(v, [below, here, above], col, row) {
                        out.push(RawExtremum { octave: o, layer, row, col });
                    }
                }
            }
        }
    }
    out
}

fn is_strict_extremum(v: f32, stack: [&crate::imaging::GrayImage; 3], col: usize, row: usize) -> bool {
    let mut is_max = true;
    let mut is_min = true;
    for (k, img) in stack.iter().enumerate() {
        for y in row - 1..=row + 1 {
            for x in col - 1..=col + 1 {
                if k == 1 && x == col && y == row {
                    continue;
                }
                let n = img.get(x, y);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

struct Fit {
    offset: [f64; 3],
    value: f64,
    dxx: f64,
    dyy: f64,
    dxy: f64,
}

fn fit_quadratic(dog: &DogPyramid, o: usize, layer: usize, r: usize, c: usize) -> Option<Fit> {
    let at = |l: usize, y: usize, x: usize| dog.octaves[o][l].get(x, y) as f64;
    let v = at(layer, r, c);
    let dx = 0.5 * (at(layer, r, c + 1) - at(layer, r, c - 1));
    let dy = 0.5 * (at(layer, r + 1, c) - at(layer, r - 1, c));
    let ds = 0.5 * (at(layer + 1, r, c) - at(layer - 1, r, c));
    let dxx = at(layer, r, c + 1) + at(layer, r, c - 1) - 2.0 * v;
    let dyy = at(layer, r + 1, c) + at(layer, r - 1, c) - 2.0 * v;
    let dss = at(layer + 1, r, c) + at(layer - 1, r, c) - 2.0 * v;
    let dxy = 0.25 * (at(layer, r + 1, c + 1) - at(layer, r + 1, c - 1) - at(layer, r - 1, c + 1) + at(layer, r - 1, c - 1));
    let dxs = 0.25 * (at(layer + 1, r, c + 1) - at(layer + 1, r, c - 1) - at(layer - 1, r, c + 1) + at(layer - 1, r, c - 1));
    let dys = 0.25 * (at(layer + 1, r + 1, c) - at(layer + 1, r - 1, c) - at(layer - 1, r + 1, c) + at(layer - 1, r - 1, c));

    let hessian = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
    let gradient = [dx, dy, ds];
    let step = solve3(hessian, gradient)?;
    let offset = [-step[0], -step[1], -step[2]];
    let value = v + 0.5 * (gradient[0] * offset[0] + gradient[1] * offset[1] + gradient[2] * offset[2]);
    Some(Fit { offset, value, dxx, dyy, dxy })
}

/// Cramer's rule; `None` for a (near) singular system.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-15 || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (i, xi) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][i] = b[r];
        }
        *xi = det(m) / d;
    }
    Some(x)
}

/// Sub-pixel/sub-scale refinement with contrast and edge rejection.
pub fn refine_keypoint(dog: &DogPyramid, raw: &RawExtremum, p: &SiftParams) -> Result<Keypoint, Rejection> {
    let o = raw.octave;
    let s = p.scales_per_octave as i64;
    let (w, h) = {
        let img = &dog.octaves[o][0];
        (img.width() as i64, img.height() as i64)
    };
    let (mut layer, mut row, mut col) = (raw.layer as i64, raw.row as i64, raw.col as i64);
    let mut converged = None;
    for _ in 0..p.max_interp_steps.max(1) {
        let fit = fit_quadratic(dog, o, layer as usize, row as usize, col as usize).ok_or(Rejection::Unconverged)?;
        if fit.offset.iter().all(|v| v.abs() <= 0.5) {
            converged = Some(fit);
            break;
        }
        if fit.offset.iter().any(|v| v.abs() > 1e6) {
            return Err(Rejection::Unconverged);
        }
        col += fit.offset[0].round() as i64;
        row += fit.offset[1].round() as i64;
        layer += fit.offset[2].round() as i64;
        if layer < 1 || layer > s || col < 1 || col >= w - 1 || row < 1 || row >= h - 1 {
            return Err(Rejection::Unconverged);
        }
    }
    let fit = converged.ok_or(Rejection::Unconverged)?;

    if fit.value.abs() < p.contrast_cutoff() {
        return Err(Rejection::LowContrast);
    }
    let trace = fit.dxx + fit.dyy;
    let det = fit.dxx * fit.dyy - fit.dxy * fit.dxy;
    if det <= 0.0 || trace * trace / det >= p.curvature_cutoff() {
        return Err(Rejection::EdgeLike);
    }

    let frame = dog.frame;
    let octave_x = col as f64 + fit.offset[0];
    let octave_y = row as f64 + fit.offset[1];
    let octave_scale = frame.octave_sigma(layer as f64 + fit.offset[2]);
    let (x, y) = frame.to_input(o, octave_x, octave_y);
    Ok(Keypoint {
        x,
        y,
        scale: frame.sigma_to_input(o, octave_scale),
        orientation: 0.0,
        response: fit.value.abs(),
        octave: o,
        layer: layer as usize,
        octave_x,
        octave_y,
        octave_scale,
    })
}
