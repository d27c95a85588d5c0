//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Coordinates cross the boundary as flat `Float64Array`s of `x y z`
//! triples.

use pcm_georef::rubber_sheet::{enclosing_cuboid, DEFAULT_FACTOR_XY, DEFAULT_FACTOR_Z};
use pcm_georef::{tetrahedralize, ControlPointKind, ControlPointPair, Point3, RubberSheet, SplineSegment};
use wasm_bindgen::prelude::*;

fn points(flat: &[f64]) -> Result<Vec<Point3>, String> {
    if !flat.len().is_multiple_of(3) {
        return Err(format!("expected x y z triples, got {} numbers", flat.len()));
    }
    Ok(flat.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect())
}

fn flatten(points: &[Point3]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// Delaunay tetrahedralization. Returns four vertex indices per tetrahedron.
pub fn triangulate(flat: &[f64]) -> Result<Vec<u32>, String> {
    let tet = tetrahedralize(&points(flat)?).map_err(|e| e.to_string())?;
    Ok(tet.tetrahedra().iter().flatten().map(|&v| v as u32).collect())
}

/// Rubber-sheet warp of `queries` defined by control points moved from
/// `source` to `target`, enclosed by the default cuboid.
pub fn warp(source: &[f64], target: &[f64], queries: &[f64]) -> Result<Vec<f64>, String> {
    let (source, target) = (points(source)?, points(target)?);
    if source.len() != target.len() {
        return Err(format!("{} sources but {} targets", source.len(), target.len()));
    }
    let mut pairs: Vec<ControlPointPair> = source
        .iter()
        .zip(&target)
        .enumerate()
        .map(|(i, (&s, &t))| ControlPointPair {
            source: s,
            target: t,
            kind: ControlPointKind::Trajectory,
            source_index: Some(i),
        })
        .collect();
    pairs.extend(enclosing_cuboid(&source, &target, DEFAULT_FACTOR_XY, DEFAULT_FACTOR_Z).map_err(|e| e.to_string())?);
    let sheet = RubberSheet::solve(pairs).map_err(|e| e.to_string())?;
    let (out, _) = sheet.transform_points(&points(queries)?);
    Ok(flatten(&out))
}

/// Cubic spline through four reference points at `times`, sampled at
/// `samples` evenly spaced parameters.
pub fn spline(reference: &[f64], times: &[f64], samples: usize) -> Result<Vec<f64>, String> {
    let pts: [Point3; 4] = points(reference)?
        .try_into()
        .map_err(|_| "need exactly four reference points".to_string())?;
    let times: [f64; 4] = times.try_into().map_err(|_| "need exactly four times".to_string())?;
    let seg = SplineSegment::from_frames(pts, times).map_err(|e| e.to_string())?;
    let n = samples.max(2);
    let out = (0..n)
        .map(|k| seg.evaluate(k as f64 / (n - 1) as f64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(flatten(&out))
}

#[wasm_bindgen(js_name = triangulate)]
pub fn triangulate_js(points: &[f64]) -> Result<Vec<u32>, JsError> {
    triangulate(points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = warp)]
pub fn warp_js(source: &[f64], target: &[f64], queries: &[f64]) -> Result<Vec<f64>, JsError> {
    warp(source, target, queries).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = spline)]
pub fn spline_js(reference: &[f64], times: &[f64], samples: usize) -> Result<Vec<f64>, JsError> {
    spline(reference, times, samples).map_err(|e| JsError::new(&e))
}
