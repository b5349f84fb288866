use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Settings for comparing tape gradients against central differences.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Perturbation `h` in `(f(x + h) - f(x - h)) / 2h`.
    pub step: f64,
    /// Lower bound on the denominator of the relative error, so that
    /// near-zero gradients are compared in absolute terms.
    pub floor: f64,
    /// Coordinates sampled per parameter; all are checked when the
    /// parameter is smaller.
    pub max_coords: usize,
    pub seed: u64,
}

impl GradCheckConfig {
    /// Step `1e-3` with a unit floor for `f32`; step `1e-5` with floor
    /// `1e-3` for `f64`.
    pub fn for_scalar<T: Scalar>() -> Self {
        let (step, floor) = if T::BYTES == 4 { (1e-3, 1.0) } else { (1e-5, 1e-3) };
        Self {
            step,
            floor,
            max_coords: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error per parameter.
    pub per_param: Vec<f64>,
    pub max_rel_error: f64,
    /// `(parameter, flat coordinate)` of the largest error.
    pub worst: Option<(usize, usize)>,
    pub coords_checked: usize,
    /// Coordinates left out because the perturbation moved some relu input
    /// across zero, where the function has no derivative.
    pub coords_skipped: usize,
    /// Skipped coordinates per parameter.
    pub skipped_per_param: Vec<usize>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Loss value and relu sign signature.
fn eval<T: Scalar, F>(f: &F, params: &[Tensor<T>]) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    Ok((tape.value(loss).data()[0].as_f64(), tape.kink_signature()))
}

/// Compare the reverse-mode gradient of the scalar `f` with central
/// differences at sampled coordinates of every parameter. Coordinates whose
/// perturbation changes any relu's active set are skipped and counted.
pub fn grad_check<T: Scalar, F>(
    params: &[Tensor<T>],
    f: F,
    config: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let base_signature = tape.kink_signature();
    let analytic: Vec<Tensor<T>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p))
        .collect();
    drop(tape);

    let mut rng = Rng::new(config.seed);
    let mut report = GradCheckReport {
        per_param: Vec::with_capacity(params.len()),
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
        coords_skipped: 0,
        skipped_per_param: vec![0; params.len()],
    };
    let mut work: Vec<Tensor<T>> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        let n = param.numel();
        let coords: Vec<usize> = if n <= config.max_coords {
            (0..n).collect()
        } else {
            let mut all = rng.permutation(n);
            all.truncate(config.max_coords);
            all.sort_unstable();
            all
        };
        let mut worst = 0.0f64;
        for &c in &coords {
            let original = param.data()[c];
            let hi = T::from_f64_lossy(original.as_f64() + config.step);
            let lo = T::from_f64_lossy(original.as_f64() - config.step);
            work[pi].data_mut()[c] = hi;
            let (plus, sig_plus) = eval(&f, &work)?;
            work[pi].data_mut()[c] = lo;
            let (minus, sig_minus) = eval(&f, &work)?;
            work[pi].data_mut()[c] = original;
            if sig_plus != base_signature || sig_minus != base_signature {
                report.coords_skipped += 1;
                report.skipped_per_param[pi] += 1;
                continue;
            }
            let numeric = (plus - minus) / (hi.as_f64() - lo.as_f64());
            let a = analytic[pi].data()[c].as_f64();
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(config.floor);
            if err > worst {
                worst = err;
            }
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((pi, c));
            }
            report.coords_checked += 1;
        }
        report.per_param.push(worst);
    }
    Ok(report)
}
