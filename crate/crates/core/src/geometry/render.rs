use super::bank::Rgb;
use super::cellset::CellSet;
use super::lattice::Quarter;
use super::GeometryError;

pub const BACKGROUND: Rgb = [255, 255, 255];
pub const CANVAS_PX: usize = 80;

/// Row-major RGB raster; row 0 is the top of the figure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Raster {
    pub fn blank(width: usize, height: usize) -> Self {
        Raster { width, height, pixels: vec![BACKGROUND; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = vec![];
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().expect("png header");
            let data: Vec<u8> = self.pixels.iter().flatten().copied().collect();
            w.write_image_data(&data).expect("png data");
        }
        out
    }
}

/// Which wedge of a cell contains the pixel centre `(a, b)`, given in
/// doubled pixel units with the cell spanning `0..n` on both axes (y up).
fn quarter_at(a: usize, b: usize, n: usize) -> Quarter {
    let below_main = b < a; // under the diagonal y = x
    let below_anti = a + b < n; // under the diagonal y = n - x
    match (below_main, below_anti) {
        (true, true) => Quarter::S,
        (true, false) => Quarter::E,
        (false, false) => Quarter::N,
        (false, true) => Quarter::W,
    }
}

/// Rasterize a figure at `cell_px` pixels per lattice cell, failing when
/// either side would exceed `max_px`.
pub fn render(c: &CellSet, cell_px: usize, palette: &[Rgb], max_px: usize) -> Result<Raster, GeometryError> {
    assert!(cell_px >= 1, "cell_px must be positive");
    let c = c.canonicalize();
    let Some((_, _, mx, my)) = c.bounds() else {
        return Ok(Raster::blank(0, 0));
    };
    let (w, h) = ((mx as usize + 1) * cell_px, (my as usize + 1) * cell_px);
    if w > max_px || h > max_px {
        return Err(GeometryError::CanvasOverflow { width: w, height: h, max: max_px });
    }
    let mut r = Raster::blank(w, h);
    paint(&mut r, &c, cell_px, palette, 0, 0);
    Ok(r)
}

fn paint(r: &mut Raster, c: &CellSet, cell_px: usize, palette: &[Rgb], ox: usize, oy: usize) {
    let my = c.bounds().map_or(0, |b| b.3) as usize;
    let n = 2 * cell_px;
    for (prim, w) in c.wedges() {
        let color = palette.get(prim.0 as usize).copied().unwrap_or([0, 0, 0]);
        let (cx, cy) = (w.x as usize * cell_px, (my - w.y as usize) * cell_px);
        for py in 0..cell_px {
            for px in 0..cell_px {
                // raster rows grow downward, lattice y grows upward
                let b = 2 * (cell_px - 1 - py) + 1;
                if quarter_at(2 * px + 1, b, n) == w.q {
                    r.pixels[(oy + cy + py) * r.width + ox + cx + px] = color;
                }
            }
        }
    }
}

/// Fixed-size square canvas with the figure centred at the largest integer
/// cell size that fits.
pub fn render_canvas(c: &CellSet, palette: &[Rgb], size: usize) -> Result<Raster, GeometryError> {
    let c = c.canonicalize();
    let mut r = Raster::blank(size, size);
    let Some((_, _, mx, my)) = c.bounds() else {
        return Ok(r);
    };
    let span = (mx.max(my) + 1) as usize;
    let cell_px = size / span;
    if cell_px == 0 {
        return Err(GeometryError::CanvasOverflow { width: span, height: span, max: size });
    }
    let (w, h) = ((mx as usize + 1) * cell_px, (my as usize + 1) * cell_px);
    paint(&mut r, &c, cell_px, palette, (size - w) / 2, (size - h) / 2);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::bank::PrimId;
    use crate::geometry::cellset::Piece;
    use crate::geometry::lattice::Wedge;

    const RED: Rgb = [255, 0, 0];

    fn full(x: i32, y: i32) -> CellSet {
        CellSet::new(vec![Piece { prim: PrimId(0), wedges: Quarter::ALL.iter().map(|&q| Wedge::new(x, y, q)).collect() }])
    }

    #[test]
    fn empty_figure_is_all_background() {
        let r = render_canvas(&CellSet::empty(), &[RED], 80).unwrap();
        assert!(r.pixels.iter().all(|&p| p == BACKGROUND));
    }

    #[test]
    fn full_cell_fills_block() {
        let r = render(&full(0, 0), 2, &[RED], 80).unwrap();
        assert_eq!((r.width, r.height), (2, 2));
        assert!(r.pixels.iter().all(|&p| p == RED));
    }

    #[test]
    fn translation_does_not_change_output() {
        let a = render(&full(0, 0), 5, &[RED], 80).unwrap();
        let b = render(&full(9, -4).translate(3, 3), 5, &[RED], 80).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_png(), b.to_png());
    }

    #[test]
    fn half_triangle_covers_half_the_pixels() {
        let sw = CellSet::new(vec![Piece {
            prim: PrimId(0),
            wedges: vec![Wedge::new(0, 0, Quarter::S), Wedge::new(0, 0, Quarter::W)],
        }]);
        let r = render(&sw, 10, &[RED], 80).unwrap();
        let filled = r.pixels.iter().filter(|&&p| p == RED).count();
        assert!((45..=55).contains(&filled), "{filled}");
        // lower-left pixel is inside, upper-right is not
        assert_eq!(r.get(0, 9), RED);
        assert_eq!(r.get(9, 0), BACKGROUND);
    }

    #[test]
    fn oversize_figure_overflows() {
        let err = render(&full(0, 0), 100, &[RED], 80).unwrap_err();
        assert!(matches!(err, GeometryError::CanvasOverflow { .. }));
    }
}
