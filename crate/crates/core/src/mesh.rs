//! Structured quadrilateral meshes of a channel with a rectangular obstacle,
//! carrying Q2 velocity nodes and Q1 pressure nodes.
//!
//! The channel is `[0, L] x [-H, H]`. Grid lines are placed on the channel and
//! obstacle edges; each of the resulting segments is split into equal
//! elements of size at most `H/4` on level 1, and every refinement level
//! halves all elements. With the default geometry and `L = 12`, level 2 has
//! 12,640 velocity and 1,640 pressure degrees of freedom.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains_strictly(&self, x: f64, y: f64) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }
}

/// Obstacle used by the benchmark channel.
pub const DEFAULT_OBSTACLE: Rect = Rect { x0: 1.75, x1: 2.25, y0: -0.25, y1: 0.25 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Inflow,
    Wall,
    Obstacle,
    Outflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub element: usize,
    /// End nodes first, midside node last.
    pub nodes: [usize; 3],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    pub length: f64,
    pub half_height: f64,
    pub obstacle: Option<Rect>,
}

impl ChannelGeometry {
    pub fn area(&self) -> f64 {
        2.0 * self.length * self.half_height - self.obstacle.map_or(0.0, |o| o.area())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let inside = (0.0..=self.length).contains(&x) && (-self.half_height..=self.half_height).contains(&y);
        inside && !self.obstacle.is_some_and(|o| o.contains_strictly(x, y))
    }
}

/// Q2/Q1 Taylor-Hood mesh.
///
/// Element nodes are stored in tensor order `3*b + a`, with `a` running in x
/// and `b` in y over {0, 1, 2}; pressure nodes of an element are the corner
/// nodes in order `2*b + a`.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub geometry: ChannelGeometry,
    pub refinement: u32,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 9]>,
    pub element_pressure: Vec<[usize; 4]>,
    /// Q2 node index of every pressure node.
    pub pressure_nodes: Vec<usize>,
    pub boundary_edges: Vec<BoundaryEdge>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    element_grid: Vec<Option<usize>>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.pressure_nodes.len()
    }

    /// Element grid dimensions (columns, rows) including obstacle holes.
    pub fn grid_shape(&self) -> (usize, usize) {
        ((self.xs.len() - 1) / 2, (self.ys.len() - 1) / 2)
    }

    /// Locates the element containing (x, y) and the reference coordinates
    /// of the point in [-1, 1]^2.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, [f64; 2])> {
        if !self.geometry.contains(x, y) {
            return None;
        }
        let (nx, ny) = self.grid_shape();
        let ex = find_interval(&self.xs, x, 2)?.min(nx - 1);
        let ey = find_interval(&self.ys, y, 2)?.min(ny - 1);
        // points on an obstacle edge may fall in a hole cell; try neighbours
        let candidates = [(ex, ey), (ex.saturating_sub(1), ey), (ex + 1, ey), (ex, ey.saturating_sub(1)), (ex, ey + 1)];
        for (cx, cy) in candidates {
            if cx >= nx || cy >= ny {
                continue;
            }
            if let Some(e) = self.element_grid[cx * ny + cy] {
                let (x0, x1) = (self.xs[2 * cx], self.xs[2 * cx + 2]);
                let (y0, y1) = (self.ys[2 * cy], self.ys[2 * cy + 2]);
                if x < x0 - 1e-12 || x > x1 + 1e-12 || y < y0 - 1e-12 || y > y1 + 1e-12 {
                    continue;
                }
                let s = 2.0 * (x - x0) / (x1 - x0) - 1.0;
                let t = 2.0 * (y - y0) / (y1 - y0) - 1.0;
                return Some((e, [s.clamp(-1.0, 1.0), t.clamp(-1.0, 1.0)]));
            }
        }
        None
    }

    /// Nodes lying on edges with one of the given tags.
    pub fn nodes_with_tags(&self, tags: &[BoundaryTag]) -> Vec<bool> {
        let mut mark = vec![false; self.n_nodes()];
        for e in &self.boundary_edges {
            if tags.contains(&e.tag) {
                for &n in &e.nodes {
                    mark[n] = true;
                }
            }
        }
        mark
    }
}

fn find_interval(lines: &[f64], v: f64, stride: usize) -> Option<usize> {
    let coarse: Vec<f64> = lines.iter().step_by(stride).copied().collect();
    if v < coarse[0] - 1e-12 || v > coarse[coarse.len() - 1] + 1e-12 {
        return None;
    }
    let idx = coarse.partition_point(|&c| c <= v);
    Some(idx.saturating_sub(1))
}

/// Splits `[a, b]` at the given interior breakpoints into elements no longer
/// than `h`, returning element edge coordinates.
fn graded_lines(breaks: &[f64], h: f64, factor: usize) -> Vec<f64> {
    let mut lines = vec![breaks[0]];
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        let n = ((len / h - 1e-9).ceil() as usize).max(1) * factor;
        for i in 1..=n {
            lines.push(if i == n { w[1] } else { w[0] + len * i as f64 / n as f64 });
        }
    }
    lines
}

fn with_midpoints(lines: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * lines.len() - 1);
    for w in lines.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*lines.last().unwrap());
    out
}

/// Generates the channel mesh. `obstacle = None` gives an empty channel.
pub fn generate_obstacle_mesh(channel_length: f64, half_height: f64, obstacle: Option<Rect>, refinement: u32) -> Result<Mesh> {
    if !(channel_length > 0.0 && half_height > 0.0) {
        return Err(Error::Geometry(format!("channel dimensions must be positive, got {channel_length} x {half_height}")));
    }
    if refinement < 1 {
        return Err(Error::Geometry("refinement level must be at least 1".into()));
    }
    if let Some(o) = obstacle {
        let inside = o.x0 > 0.0 && o.x1 < channel_length && o.y0 > -half_height && o.y1 < half_height;
        if !(o.x1 > o.x0 && o.y1 > o.y0) || !inside {
            return Err(Error::Geometry(format!("obstacle {o:?} is not an axis-aligned box strictly inside the channel")));
        }
    }
    let h = half_height / 4.0;
    let factor = 1usize << (refinement - 1);
    let (xb, yb) = match obstacle {
        Some(o) => (vec![0.0, o.x0, o.x1, channel_length], vec![-half_height, o.y0, o.y1, half_height]),
        None => (vec![0.0, channel_length], vec![-half_height, half_height]),
    };
    let xe = graded_lines(&xb, h, factor);
    let ye = graded_lines(&yb, h, factor);
    let (nx, ny) = (xe.len() - 1, ye.len() - 1);
    let xs = with_midpoints(&xe);
    let ys = with_midpoints(&ye);

    // obstacle as element index ranges [ox0, ox1) x [oy0, oy1)
    let hole = obstacle.map(|o| {
        let fx = |v: f64| xe.iter().position(|&c| (c - v).abs() < 1e-12).unwrap();
        let fy = |v: f64| ye.iter().position(|&c| (c - v).abs() < 1e-12).unwrap();
        (fx(o.x0), fx(o.x1), fy(o.y0), fy(o.y1))
    });
    let in_hole_elem = |ex: usize, ey: usize| hole.is_some_and(|(a, b, c, d)| ex >= a && ex < b && ey >= c && ey < d);
    let in_hole_node = |i: usize, j: usize| hole.is_some_and(|(a, b, c, d)| i > 2 * a && i < 2 * b && j > 2 * c && j < 2 * d);

    // number nodes column by column, y fastest
    let (nqx, nqy) = (xs.len(), ys.len());
    let mut node_id = vec![usize::MAX; nqx * nqy];
    let mut nodes = Vec::new();
    for i in 0..nqx {
        for j in 0..nqy {
            if !in_hole_node(i, j) {
                node_id[i * nqy + j] = nodes.len();
                nodes.push([xs[i], ys[j]]);
            }
        }
    }

    let mut elements = Vec::new();
    let mut element_grid = vec![None; nx * ny];
    for ex in 0..nx {
        for ey in 0..ny {
            if in_hole_elem(ex, ey) {
                continue;
            }
            let mut conn = [0usize; 9];
            for b in 0..3 {
                for a in 0..3 {
                    conn[3 * b + a] = node_id[(2 * ex + a) * nqy + 2 * ey + b];
                }
            }
            element_grid[ex * ny + ey] = Some(elements.len());
            elements.push(conn);
        }
    }

    // pressure nodes: element corners, numbered in node order
    let mut is_corner = vec![false; nodes.len()];
    for conn in &elements {
        for &l in &[0, 2, 6, 8] {
            is_corner[conn[l]] = true;
        }
    }
    let mut p_of_node = vec![usize::MAX; nodes.len()];
    let mut pressure_nodes = Vec::new();
    for (n, &c) in is_corner.iter().enumerate() {
        if c {
            p_of_node[n] = pressure_nodes.len();
            pressure_nodes.push(n);
        }
    }
    let element_pressure = elements
        .iter()
        .map(|c| [p_of_node[c[0]], p_of_node[c[2]], p_of_node[c[6]], p_of_node[c[8]]])
        .collect();

    let mut boundary_edges = Vec::new();
    let exists = |ex: isize, ey: isize| ex >= 0 && ey >= 0 && (ex as usize) < nx && (ey as usize) < ny && element_grid[ex as usize * ny + ey as usize].is_some();
    for ex in 0..nx {
        for ey in 0..ny {
            let Some(e) = element_grid[ex * ny + ey] else { continue };
            let c = &elements[e];
            let (ix, iy) = (ex as isize, ey as isize);
            // (neighbour offset, local nodes of the shared side)
            let sides = [((-1, 0), [0, 6, 3]), ((1, 0), [2, 8, 5]), ((0, -1), [0, 2, 1]), ((0, 1), [6, 8, 7])];
            for ((dx, dy), loc) in sides {
                if exists(ix + dx, iy + dy) {
                    continue;
                }
                let tag = if dx == -1 && ex == 0 {
                    BoundaryTag::Inflow
                } else if dx == 1 && ex == nx - 1 {
                    BoundaryTag::Outflow
                } else if (dy == -1 && ey == 0) || (dy == 1 && ey == ny - 1) {
                    BoundaryTag::Wall
                } else {
                    BoundaryTag::Obstacle
                };
                boundary_edges.push(BoundaryEdge { element: e, nodes: [c[loc[0]], c[loc[1]], c[loc[2]]], tag });
            }
        }
    }

    Ok(Mesh {
        geometry: ChannelGeometry { length: channel_length, half_height, obstacle },
        refinement,
        nodes,
        elements,
        element_pressure,
        pressure_nodes,
        boundary_edges,
        xs,
        ys,
        element_grid,
    })
}

/// Degree-of-freedom layout: velocity dofs are all x-components followed by
/// all y-components (`n_u = 2 * n_nodes`), pressure dofs follow the pressure
/// node numbering.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub n_nodes: usize,
    pub n_u: usize,
    pub n_p: usize,
    /// Per Q2 node: velocity prescribed (inflow, wall or obstacle).
    pub dirichlet_nodes: Vec<bool>,
    /// Per velocity dof.
    pub dirichlet: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let dirichlet_nodes = mesh.nodes_with_tags(&[BoundaryTag::Inflow, BoundaryTag::Wall, BoundaryTag::Obstacle]);
        let mut dirichlet = dirichlet_nodes.clone();
        dirichlet.extend_from_slice(&dirichlet_nodes);
        DofMap { n_nodes: mesh.n_nodes(), n_u: 2 * mesh.n_nodes(), n_p: mesh.n_pressure(), dirichlet_nodes, dirichlet }
    }

    pub fn n_x(&self) -> usize {
        self.n_u + self.n_p
    }

    /// Global velocity dofs of an element: 9 x-components then 9 y-components.
    pub fn element_velocity_dofs(&self, mesh: &Mesh, e: usize) -> [usize; 18] {
        let mut d = [0usize; 18];
        for (l, &n) in mesh.elements[e].iter().enumerate() {
            d[l] = n;
            d[9 + l] = self.n_nodes + n;
        }
        d
    }
}
