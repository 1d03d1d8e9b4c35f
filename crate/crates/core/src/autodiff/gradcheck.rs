use ndarray::Array2;

use super::params::{BoundParams, ParameterStore};
use super::tape::{Tape, Tensor};
use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Compares reverse-mode gradients of `f` against central finite differences
/// at every parameter coordinate and returns the largest relative error
/// `|a − n| / max(1, |a|, |n|)`.
pub fn grad_check<T, F>(f: F, params: &ParameterStore<T>, step: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &BoundParams) -> Result<Tensor>,
{
    if !(step >= T::of(1e-8) && step <= T::of(1e-4)) {
        bail!(Argument, "finite-difference step {step} outside [1e-8, 1e-4]");
    }
    let mut tape = Tape::new();
    let bound = tape.bind(params)?;
    let loss = f(&mut tape, &bound)?;
    let analytic = tape.backward(loss)?.parameters();

    let eval = |store: &ParameterStore<T>| -> Result<T> {
        let mut tape = Tape::new();
        let bound = tape.bind(store)?;
        let out = f(&mut tape, &bound)?;
        Ok(tape.scalar(out))
    };

    let mut worst = T::zero();
    let mut probe = params.clone();
    for (name, value) in params.iter() {
        let grad: &Array2<T> = analytic.get(name).expect("same layout");
        for idx in 0..value.len() {
            let (r, c) = (idx / value.ncols(), idx % value.ncols());
            let orig = value[[r, c]];
            probe.get_mut(name).expect("same layout")[[r, c]] = orig + step;
            let plus = eval(&probe)?;
            probe.get_mut(name).expect("same layout")[[r, c]] = orig - step;
            let minus = eval(&probe)?;
            probe.get_mut(name).expect("same layout")[[r, c]] = orig;
            let numeric = (plus - minus) / (step + step);
            let a = grad[[r, c]];
            let denom = T::one().max(a.abs()).max(numeric.abs());
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
