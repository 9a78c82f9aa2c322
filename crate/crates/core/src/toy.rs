//! Small DAE models with closed-form behaviour, for testing solvers.

use crate::dae::DaeModel;
use crate::dual::Scalar;

/// `0 = R i - v`, `0 = -i`: a pure series resistor.
#[derive(Debug, Clone)]
pub struct SeriesResistor {
    pub resistance: f64,
    mass: [f64; 2],
}

impl SeriesResistor {
    pub fn new(resistance: f64) -> Self {
        Self {
            resistance,
            mass: [0.0; 2],
        }
    }
}

impl DaeModel for SeriesResistor {
    fn n_states(&self) -> usize {
        2
    }
    fn mass(&self) -> &[f64] {
        &self.mass
    }
    fn residual<S: Scalar>(&self, x: &[S], _aux: &[S], out: &mut [S]) {
        out[0] = x[1] * self.resistance - x[0];
        out[1] = -x[1];
    }
    fn generic_state(&self) -> Vec<f64> {
        vec![0.3, 0.7]
    }
}

/// Parallel R-C element: `C u' = i - u / R`, `0 = u - v`, `0 = -i`.
///
/// Its impedance is `R / (1 + j w R C)`.
#[derive(Debug, Clone)]
pub struct ParallelRc {
    pub resistance: f64,
    pub capacitance: f64,
    mass: [f64; 3],
}

impl ParallelRc {
    pub fn new(resistance: f64, capacitance: f64) -> Self {
        Self {
            resistance,
            capacitance,
            mass: [capacitance, 0.0, 0.0],
        }
    }
}

impl DaeModel for ParallelRc {
    fn n_states(&self) -> usize {
        3
    }
    fn mass(&self) -> &[f64] {
        &self.mass
    }
    fn residual<S: Scalar>(&self, x: &[S], _aux: &[S], out: &mut [S]) {
        out[0] = x[2] - x[0] / self.resistance;
        out[1] = x[0] - x[1];
        out[2] = -x[2];
    }
    fn generic_state(&self) -> Vec<f64> {
        vec![0.1, 0.2, 0.3]
    }
}

/// `F(x) = A x` with unit mass on the leading differential block.
#[derive(Debug, Clone)]
pub struct LinearResidual {
    pub a: Vec<Vec<f64>>,
    mass: Vec<f64>,
}

impl LinearResidual {
    pub fn new(a: Vec<Vec<f64>>, mass: Vec<f64>) -> Self {
        assert_eq!(a.len(), mass.len());
        Self { a, mass }
    }
}

impl DaeModel for LinearResidual {
    fn n_states(&self) -> usize {
        self.mass.len()
    }
    fn mass(&self) -> &[f64] {
        &self.mass
    }
    fn residual<S: Scalar>(&self, x: &[S], _aux: &[S], out: &mut [S]) {
        for (o, row) in out.iter_mut().zip(&self.a) {
            let mut acc = S::constant(0.0);
            for (&a, &xv) in row.iter().zip(x) {
                if a != 0.0 {
                    acc += xv * a;
                }
            }
            *o = acc;
        }
    }
    fn generic_state(&self) -> Vec<f64> {
        (0..self.mass.len()).map(|k| 0.1 + k as f64).collect()
    }
}
