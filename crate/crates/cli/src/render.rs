//! Dependency-free binary PGM/PPM rendering of map grids. Images are
//! row-major with the top row at maximum y, matching the usual image
//! orientation of a north-up map.

use gevbev_core::grid::Grid;

fn byte(value: f64) -> u8 {
    (255.0 * value).round().clamp(0.0, 255.0) as u8
}

fn rows_top_down(height: usize) -> impl Iterator<Item = usize> {
    (0..height).rev()
}

/// Binary PGM (P5): gray = round(255 * (1 - u)); unobserved cells are black.
pub fn uncertainty_pgm(u: &Grid<f64>, observed: &Grid<bool>) -> Vec<u8> {
    assert!(u.spec.same_frame(&observed.spec));
    let (w, h) = (u.spec.width, u.spec.height);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in rows_top_down(h) {
        for col in 0..w {
            let g = if *observed.get(col, row) {
                byte(1.0 - u.get(col, row))
            } else {
                0
            };
            out.push(g);
        }
    }
    out
}

/// Binary PPM (P6): observed cells get green = round(255 * p_fg) and
/// blue = round(255 * p_bg); unobserved cells are black.
pub fn confidence_ppm(p_fg: &Grid<f64>, observed: &Grid<bool>) -> Vec<u8> {
    assert!(p_fg.spec.same_frame(&observed.spec));
    let (w, h) = (p_fg.spec.width, p_fg.spec.height);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for row in rows_top_down(h) {
        for col in 0..w {
            if *observed.get(col, row) {
                let p = *p_fg.get(col, row);
                out.extend_from_slice(&[0, byte(p), byte(1.0 - p)]);
            } else {
                out.extend_from_slice(&[0, 0, 0]);
            }
        }
    }
    out
}

/// Binary PGM (P5) of the observed mask: 255 observed, 0 otherwise.
pub fn observed_pgm(observed: &Grid<bool>) -> Vec<u8> {
    let (w, h) = (observed.spec.width, observed.spec.height);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in rows_top_down(h) {
        for col in 0..w {
            out.push(if *observed.get(col, row) { 255 } else { 0 });
        }
    }
    out
}
