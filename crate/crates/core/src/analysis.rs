//! Prediction surfaces over binder content × air voids at a fixed strain,
//! with a mask of cells that lie near training data.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;

pub const DEFAULT_RESOLUTION: usize = 50;
pub const DEFAULT_RADIUS: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PdpSurface {
    /// Microstrain held fixed across the surface.
    pub strain_level: f64,
    pub binder_axis: Vec<f64>,
    pub voids_axis: Vec<f64>,
    /// `predictions[i][j]` at `(binder_axis[i], voids_axis[j])`.
    pub predictions: Vec<Vec<f64>>,
    pub coverage: Vec<Vec<bool>>,
    /// `(binder, voids)` of the training samples.
    pub data_points: Vec<(f64, f64)>,
    pub radius: f64,
}

fn axis(min: f64, max: f64, resolution: usize) -> Vec<f64> {
    if resolution == 1 {
        return vec![min];
    }
    let step = (max - min) / (resolution - 1) as f64;
    (0..resolution)
        .map(|i| if i == resolution - 1 { max } else { min + step * i as f64 })
        .collect()
}

/// Covered iff some data point lies within `radius` (inclusive) of the cell.
/// All coordinates must already be in scaled units.
pub fn coverage_mask(
    binder_axis: &[f64],
    voids_axis: &[f64],
    data_points: &[(f64, f64)],
    radius: f64,
) -> Result<Vec<Vec<bool>>> {
    if !(radius > 0.0) {
        return Err(Error::invalid("coverage radius must be positive"));
    }
    let r2 = radius * radius;
    Ok(binder_axis
        .iter()
        .map(|&b| {
            voids_axis
                .iter()
                .map(|&v| {
                    data_points
                        .iter()
                        .any(|&(pb, pv)| (pb - b) * (pb - b) + (pv - v) * (pv - v) <= r2)
                })
                .collect()
        })
        .collect())
}

/// Evaluates `model` on a `resolution × resolution` grid spanning the
/// training ranges of binder content and air voids, at `strain_level`.
pub fn partial_dependence(
    model: &Model,
    strain_level: f64,
    resolution: usize,
    radius: f64,
) -> Result<PdpSurface> {
    if resolution == 0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    let scaler = &model.scaler;
    if !scaler.strain.contains(strain_level) {
        return Err(Error::StrainExtrapolation {
            strain: strain_level,
            min: scaler.strain.min,
            max: scaler.strain.max,
        });
    }
    if resolution > 1 && (scaler.binder.min == scaler.binder.max || scaler.voids.min == scaler.voids.max)
    {
        return Err(Error::invalid(
            "training data spans a single binder or voids value; use resolution 1",
        ));
    }
    let binder_axis = axis(scaler.binder.min, scaler.binder.max, resolution);
    let voids_axis = axis(scaler.voids.min, scaler.voids.max, resolution);

    let predictions = binder_axis
        .iter()
        .map(|&b| {
            voids_axis
                .iter()
                .map(|&v| model.predict_one([b, v, strain_level]).map(|p| p.cycles))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let data_points: Vec<(f64, f64)> = model.training_inputs.iter().map(|x| (x[0], x[1])).collect();
    let scaled_points: Vec<(f64, f64)> = data_points
        .iter()
        .map(|&(b, v)| (scaler.binder.scale(b), scaler.voids.scale(v)))
        .collect();
    let scaled_binder: Vec<f64> = binder_axis.iter().map(|&b| scaler.binder.scale(b)).collect();
    let scaled_voids: Vec<f64> = voids_axis.iter().map(|&v| scaler.voids.scale(v)).collect();
    let coverage = coverage_mask(&scaled_binder, &scaled_voids, &scaled_points, radius)?;

    Ok(PdpSurface {
        strain_level,
        binder_axis,
        voids_axis,
        predictions,
        coverage,
        data_points,
        radius,
    })
}

/// Ranks with ties sharing their average (1-based) rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation. Zero when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub binder: f64,
    pub voids: f64,
    pub pred_nf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendSummary {
    pub n_covered: usize,
    pub binder_spearman: f64,
    pub voids_spearman: f64,
    pub argmax: Cell,
    pub argmin: Cell,
}

/// Rank correlations of the prediction with binder content and air voids
/// over covered cells, plus the extreme cells.
pub fn qualitative_trends(surface: &PdpSurface) -> Result<TrendSummary> {
    let mut cells = Vec::new();
    for (i, &b) in surface.binder_axis.iter().enumerate() {
        for (j, &v) in surface.voids_axis.iter().enumerate() {
            if surface.coverage[i][j] {
                cells.push(Cell {
                    binder: b,
                    voids: v,
                    pred_nf: surface.predictions[i][j],
                });
            }
        }
    }
    if cells.len() < 3 {
        return Err(Error::TrendUndefined(cells.len()));
    }
    let binder: Vec<f64> = cells.iter().map(|c| c.binder).collect();
    let voids: Vec<f64> = cells.iter().map(|c| c.voids).collect();
    let pred: Vec<f64> = cells.iter().map(|c| c.pred_nf).collect();
    let argmax = *cells
        .iter()
        .reduce(|a, c| if c.pred_nf > a.pred_nf { c } else { a })
        .expect("non-empty");
    let argmin = *cells
        .iter()
        .reduce(|a, c| if c.pred_nf < a.pred_nf { c } else { a })
        .expect("non-empty");
    Ok(TrendSummary {
        n_covered: cells.len(),
        binder_spearman: spearman(&binder, &pred),
        voids_spearman: spearman(&voids, &pred),
        argmax,
        argmin,
    })
}

/// Long format `binder,voids,pred_nf,covered`.
pub fn write_surface_csv<W: Write>(writer: W, surface: &PdpSurface) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["binder", "voids", "pred_nf", "covered"])?;
    for (i, b) in surface.binder_axis.iter().enumerate() {
        for (j, v) in surface.voids_axis.iter().enumerate() {
            w.write_record([
                b.to_string(),
                v.to_string(),
                surface.predictions[i][j].to_string(),
                surface.coverage[i][j].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<surface>", e))?;
    Ok(())
}

pub fn write_points_csv<W: Write>(writer: W, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["binder", "voids"])?;
    for (b, v) in points {
        w.write_record([b.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<points>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_covers_only_the_centre() {
        let ax = [0.0, 0.5, 1.0];
        let mask = coverage_mask(&ax, &ax, &[(0.5, 0.5)], 0.3).unwrap();
        for (i, row) in mask.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert_eq!(c, i == 1 && j == 1);
            }
        }
    }

    #[test]
    fn large_radius_covers_everything() {
        let ax = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mask = coverage_mask(&ax, &ax, &[(1.0, 0.0)], 2f64.sqrt()).unwrap();
        assert!(mask.iter().flatten().all(|&c| c));
    }

    #[test]
    fn tiny_radius_covers_coincident_cells() {
        let ax = [0.0, 0.5, 1.0];
        let mask = coverage_mask(&ax, &ax, &[(0.0, 1.0), (0.4, 0.4)], 1e-12).unwrap();
        let covered: Vec<(usize, usize)> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| mask[i][j])
            .collect();
        assert_eq!(covered, vec![(0, 2)]);
    }

    #[test]
    fn empty_data_covers_nothing() {
        let ax = [0.0, 1.0];
        let mask = coverage_mask(&ax, &ax, &[], 0.5).unwrap();
        assert!(mask.iter().flatten().all(|&c| !c));
        assert!(coverage_mask(&ax, &ax, &[], 0.0).is_err());
    }

    #[test]
    fn spearman_ties_and_constants() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
        assert_eq!(average_ranks(&[2.0, 1.0, 2.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn axis_endpoints_are_exact() {
        let a = axis(4.0, 6.7, 50);
        assert_eq!(a.len(), 50);
        assert_eq!(a[0], 4.0);
        assert_eq!(a[49], 6.7);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(axis(4.0, 6.7, 1), vec![4.0]);
    }
}
