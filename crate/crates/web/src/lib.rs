//! Browser demo: null-distance fields, causal futures and optical functions
//! on 1+1 dimensional grids.

use nulldist_core::grid::{BoxRegion, CausalGrid, StencilSpec};
use nulldist_core::optical::{ChartOptions, NullChart};
use nulldist_core::time::{coordinate_time, cubed_time};
use nulldist_core::TimeSense;
use wasm_bindgen::prelude::*;

/// A 1+1 scene rasterised row by row, latest time first.
pub struct Field {
    grid: CausalGrid,
    nt: usize,
    nx: usize,
}

fn region_for(name: &str) -> BoxRegion {
    match name {
        "minkowski" => BoxRegion::slab(2, (-1.5, 1.5), (-1.5, 1.5)),
        "warped_product" => BoxRegion::slab(2, (0.25, 2.25), (-1.0, 1.0)),
        _ => BoxRegion::slab(2, (0.25, 3.25), (-1.5, 1.5)),
    }
}

impl Field {
    pub fn new(spacetime: &str, time: &str, h: f64) -> Result<Field, String> {
        let st = nulldist_core::spacetime::builtin(spacetime, 2, &Default::default())
            .map_err(|e| e.to_string())?;
        let tau = match time {
            "coordinate" => coordinate_time(&st),
            "cubed" => cubed_time(&st),
            other => return Err(format!("unknown time function `{other}`")),
        };
        let grid = CausalGrid::build(&st, &tau, &region_for(spacetime), h, StencilSpec::default())
            .map_err(|e| e.to_string())?;
        let shape = grid.shape();
        let (nt, nx) = (shape[0], shape[1]);
        Ok(Field { grid, nt, nx })
    }

    fn pixel_node(&self, row: usize, col: usize) -> Option<usize> {
        self.grid
            .node_at_index(&[(self.nt - 1 - row) as i64, col as i64])
    }

    fn pixel_coords(&self, row: usize, col: usize) -> [f64; 2] {
        let r = self.grid.region();
        let h = self.grid.h();
        [r.hi[0] - row as f64 * h, r.lo[1] + col as f64 * h]
    }

    fn raster<T: Copy>(&self, f: impl Fn(usize, usize) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.nt * self.nx);
        for row in 0..self.nt {
            for col in 0..self.nx {
                out.push(f(row, col));
            }
        }
        out
    }

    fn nearest(&self, t: f64, x: f64) -> Result<usize, String> {
        self.grid
            .nearest_node(&[t, x])
            .ok_or_else(|| format!("({t}, {x}) is outside the grid"))
    }

    /// `d̂` from the node nearest `(t, x)`; NaN on excised pixels.
    pub fn null_distance(&self, t: f64, x: f64) -> Result<Vec<f64>, String> {
        let sp = self.grid.distances_from(self.nearest(t, x)?);
        Ok(self.raster(|r, c| self.pixel_node(r, c).map_or(f64::NAN, |v| sp.distance(v))))
    }

    /// 2 in the causal future, 1 in the past, 0 elsewhere, 255 on excised pixels.
    pub fn reach_mask(&self, t: f64, x: f64) -> Result<Vec<u8>, String> {
        let v = self.nearest(t, x)?;
        let fut = self
            .grid
            .reach(v, TimeSense::Future)
            .map_err(|e| e.to_string())?;
        let past = self
            .grid
            .reach(v, TimeSense::Past)
            .map_err(|e| e.to_string())?;
        Ok(self.raster(|r, c| match self.pixel_node(r, c) {
            None => 255,
            Some(u) if fut.contains(u) => 2,
            Some(u) if past.contains(u) => 1,
            Some(_) => 0,
        }))
    }

    /// Optical function of the null chart at `(t, x)`; NaN outside the chart.
    pub fn optical(&self, t: f64, x: f64, future: bool) -> Result<Vec<f64>, String> {
        let sense = if future {
            TimeSense::Future
        } else {
            TimeSense::Past
        };
        let chart = NullChart::build(
            self.grid.spacetime(),
            &[t, x],
            sense,
            ChartOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let (eps, rad) = (chart.eps(), chart.domain_radius());
        Ok(self.raster(|r, c| {
            let q = self.pixel_coords(r, c);
            if self.pixel_node(r, c).is_none()
                || (q[0] - t).abs() > eps + rad
                || (q[1] - x).abs() > rad
            {
                return f64::NAN;
            }
            match chart.inverse(&q, 1e-10) {
                Ok(v) if v.omega.abs() < eps && v.lambda <= rad => v.omega,
                _ => f64::NAN,
            }
        }))
    }
}

#[wasm_bindgen]
pub struct Demo {
    field: Field,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(spacetime: &str, time: &str, h: f64) -> Result<Demo, JsError> {
        Field::new(spacetime, time, h)
            .map(|field| Demo { field })
            .map_err(|e| JsError::new(&e))
    }

    pub fn rows(&self) -> usize {
        self.field.nt
    }

    pub fn cols(&self) -> usize {
        self.field.nx
    }

    /// `[t_min, t_max, x_min, x_max]`
    pub fn bounds(&self) -> Vec<f64> {
        let r = self.field.grid.region();
        vec![r.lo[0], r.hi[0], r.lo[1], r.hi[1]]
    }

    pub fn null_distance(&self, t: f64, x: f64) -> Result<Vec<f64>, JsError> {
        self.field.null_distance(t, x).map_err(|e| JsError::new(&e))
    }

    pub fn reach_mask(&self, t: f64, x: f64) -> Result<Vec<u8>, JsError> {
        self.field.reach_mask(t, x).map_err(|e| JsError::new(&e))
    }

    pub fn optical(&self, t: f64, x: f64, future: bool) -> Result<Vec<f64>, JsError> {
        self.field
            .optical(t, x, future)
            .map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minkowski_fields() {
        let f = Field::new("minkowski", "coordinate", 0.1).unwrap();
        assert_eq!((f.nt, f.nx), (31, 31));
        let d = f.null_distance(0.0, 0.0).unwrap();
        // centre pixel, then (t, x) = (0, 1)
        assert_eq!(d[15 * 31 + 15], 0.0);
        assert!((d[15 * 31 + 25] - 1.0).abs() < 1e-9);
        let m = f.reach_mask(0.0, 0.0).unwrap();
        assert_eq!(m[5 * 31 + 15], 2);
        assert_eq!(m[25 * 31 + 15], 1);
        assert_eq!(m[15 * 31 + 25], 0);
    }

    #[test]
    fn missing_ray_has_a_hole() {
        let f = Field::new("missing_ray", "coordinate", 0.25).unwrap();
        let m = f.reach_mask(1.0, -1.0).unwrap();
        assert!(m.contains(&255));
        assert!(Field::new("missing_ray", "quartic", 0.25).is_err());
    }

    #[test]
    fn optical_matches_closed_form() {
        let f = Field::new("minkowski", "coordinate", 0.1).unwrap();
        let w = f.optical(0.0, 0.0, true).unwrap();
        let mut seen = 0;
        for (i, v) in w.iter().enumerate() {
            if v.is_finite() {
                let q = f.pixel_coords(i / f.nx, i % f.nx);
                if q[1].abs() > 1e-9 {
                    assert!((v - (q[0] - q[1].abs())).abs() < 1e-6);
                    seen += 1;
                }
            }
        }
        assert!(seen > 10);
    }
}
