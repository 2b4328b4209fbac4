use super::{BinaryMask, GeometryError, Point, Polygon};

/// Labels 8-connected foreground components. Returns one label per pixel
/// (`0` = background, components numbered from `1` in raster order of their
/// first pixel) and the pixel count of each component.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        sizes.push(0usize);
        let label = sizes.len() as u32;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            *sizes.last_mut().unwrap() += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.bits()[j] && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, sizes)
}

/// The largest 8-connected component (earliest in raster order on ties).
pub fn largest_component(mask: &BinaryMask) -> Result<BinaryMask, GeometryError> {
    let (labels, sizes) = label_components(mask);
    let best = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i as u32 + 1)
        .ok_or(GeometryError::Empty("mask has no foreground"))?;
    if sizes.len() == 1 {
        return Ok(mask.clone());
    }
    BinaryMask::from_bits(mask.width(), mask.height(), labels.iter().map(|&l| l == best).collect())
}

const EAST: u8 = 0;
const SOUTH: u8 = 1;
const WEST: u8 = 2;
const NORTH: u8 = 3;

/// Outer boundary of the largest 8-connected component, traced along pixel
/// edges. Vertices sit on pixel corners, so rasterizing the result gives the
/// component back with its holes filled, and the shoelace area equals the
/// filled pixel count. The outline runs clockwise on screen.
pub fn extract_contour(mask: &BinaryMask) -> Result<Polygon, GeometryError> {
    let comp = largest_component(mask)?;
    let (sx, sy) = comp.foreground().next().expect("component is nonempty");
    let inside = |x: i64, y: i64| comp.get_signed(x as isize, y as isize);

    // Outgoing boundary edge from corner (vx, vy) heading `dir`, with the
    // foreground on the right-hand side.
    let has_edge = |vx: i64, vy: i64, dir: u8| -> bool {
        let nw = inside(vx - 1, vy - 1);
        let ne = inside(vx, vy - 1);
        let sw = inside(vx - 1, vy);
        let se = inside(vx, vy);
        match dir {
            EAST => se && !ne,
            SOUTH => sw && !se,
            WEST => nw && !sw,
            NORTH => ne && !nw,
            _ => unreachable!(),
        }
    };
    let step = |vx: i64, vy: i64, dir: u8| match dir {
        EAST => (vx + 1, vy),
        SOUTH => (vx, vy + 1),
        WEST => (vx - 1, vy),
        _ => (vx, vy - 1),
    };

    let start = (sx as i64, sy as i64);
    let mut pos = start;
    let mut dir = EAST;
    let mut vertices = vec![Point::new(start.0 as f64, start.1 as f64)];
    loop {
        pos = step(pos.0, pos.1, dir);
        // Left turn first keeps diagonally touching pixels in one outline.
        let next = [(dir + 3) % 4, dir, (dir + 1) % 4]
            .into_iter()
            .find(|&d| has_edge(pos.0, pos.1, d))
            .expect("boundary is closed");
        if pos == start && next == EAST {
            break;
        }
        if next != dir {
            vertices.push(Point::new(pos.0 as f64, pos.1 as f64));
        }
        dir = next;
    }
    Polygon::new(vertices)
}
