use alloc::vec::Vec;

use super::disagreement_statistic;
use crate::error::{Error, Result};
use crate::nn::{MlpClassifier, Model};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bounds2d {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    /// Predicted class of each member.
    pub predictions: Vec<usize>,
    /// Pairwise disagreement; zero for a single model.
    pub tdis: f64,
}

/// Evaluates every member on the centers of an `nx x ny` grid of cells
/// covering `bounds`, row-major with `y` as the outer index.
pub fn grid_eval(
    members: &[MlpClassifier],
    bounds: Bounds2d,
    nx: usize,
    ny: usize,
) -> Result<Vec<GridPoint>> {
    if members.is_empty() {
        return Err(Error::Arity {
            what: "grid models",
            min: 1,
            actual: 0,
        });
    }
    if let Some(m) = members.iter().find(|m| m.input_dim() != 2) {
        return Err(Error::Shape {
            context: "grid evaluation needs 2D inputs",
            expected: 2,
            actual: m.input_dim(),
        });
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("grid resolution must be positive".into()));
    }
    if !(bounds.x_max >= bounds.x_min && bounds.y_max >= bounds.y_min) {
        return Err(Error::InvalidArgument("grid bounds are inverted".into()));
    }
    let dx = (bounds.x_max - bounds.x_min) / nx as f64;
    let dy = (bounds.y_max - bounds.y_min) / ny as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = bounds.y_min + (j as f64 + 0.5) * dy;
        for i in 0..nx {
            let x = bounds.x_min + (i as f64 + 0.5) * dx;
            let outputs = members
                .iter()
                .map(|m| m.forward(&[x, y]))
                .collect::<Result<Vec<_>>>()?;
            let predictions = outputs.iter().map(|p| crate::nn::argmax(p)).collect();
            let tdis = if outputs.len() >= 2 {
                disagreement_statistic(&outputs)?
            } else {
                0.0
            };
            out.push(GridPoint {
                x,
                y,
                predictions,
                tdis,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nn::Activation;
    use alloc::vec;

    fn linear(w: [f64; 2], b: f64) -> MlpClassifier {
        // logits (w.x + b, 0)
        MlpClassifier::from_parameters(
            &[2, 2],
            Activation::Relu,
            vec![Matrix::from_rows(&[w, [0.0, 0.0]]).unwrap()],
            vec![vec![b, 0.0]],
        )
        .unwrap()
    }

    const BOX: Bounds2d = Bounds2d {
        x_min: -2.0,
        x_max: 2.0,
        y_min: -1.0,
        y_max: 3.0,
    };

    #[test]
    fn constant_model_gives_constant_grid() {
        let g = grid_eval(&[linear([0.0, 0.0], 1.0)], BOX, 4, 3).unwrap();
        assert_eq!(g.len(), 12);
        assert!(g.iter().all(|p| p.predictions == vec![0] && p.tdis == 0.0));
    }

    #[test]
    fn single_cell_is_the_box_center() {
        let g = grid_eval(&[linear([1.0, 0.0], 0.0)], BOX, 1, 1).unwrap();
        assert_eq!((g[0].x, g[0].y), (0.0, 1.0));
    }

    #[test]
    fn mirrored_boundaries_disagree_between_them() {
        // A: class 0 iff x < -1. B: class 0 iff x < 1. They disagree on (-1, 1).
        let a = linear([-5.0, 0.0], -5.0);
        let b = linear([-5.0, 0.0], 5.0);
        let wide = Bounds2d {
            x_min: -4.0,
            x_max: 4.0,
            y_min: 0.0,
            y_max: 1.0,
        };
        let g = grid_eval(&[a, b], wide, 8, 1).unwrap();
        // cells centered at -3.5, -2.5, ..., 3.5
        let inside: Vec<f64> = g.iter().filter(|p| p.x.abs() < 1.0).map(|p| p.tdis).collect();
        let outside: Vec<f64> = g.iter().filter(|p| p.x.abs() > 2.0).map(|p| p.tdis).collect();
        let min_in = inside.iter().copied().fold(f64::INFINITY, f64::min);
        let max_out = outside.iter().copied().fold(0.0, f64::max);
        assert!(min_in > max_out, "{inside:?} vs {outside:?}");
    }

    #[test]
    fn rejects_non_2d_models() {
        let m = MlpClassifier::new(&[3, 2], Activation::Relu, 0).unwrap();
        assert!(grid_eval(&[m], BOX, 2, 2).is_err());
    }
}
