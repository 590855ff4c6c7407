//! Observer gains, output injection, Artstein-reduced state feedback, the low-pass filter and the
//! assembled output-feedback law.

mod artstein;
mod controller;
mod filter;
mod observer;
mod report;

pub use controller::{
    build_xc_transforms, check_assumption3_and_design_kc, design_controller, ControlLaw, ControllerSynthesis,
};
pub use filter::{design_filter, FilterState, LowPassFilter, SweepPoint, DECAY_FACTOR};
pub use report::{OperatorRecord, SynthesisResult, TapRecord, SYNTHESIS_SCHEMA};
pub use observer::{build_o0, check_assumption2_and_design_lo, design_observer, ObserverSynthesis};

use crate::delayform::{derive_control_delay_form, derive_observer_delay_form, ControlDelayForm, ObserverDelayForm};
use crate::error::{Error, Result};
use crate::kernels::{CouplingFunctions, KernelBundle, KernelSetControl, KernelSetObserver, TriGrid};
use crate::model::PlantModel;
use crate::numerics::{Matrix, DEFAULT_MARGIN};

/// `A_o = [[A₀, G₄], [0, A₁]]` and `G_Z = [G₃; E₁]`: `Ż = A_oZ + G_Z α(t,1)` for `Z = (ξ, X₁)`.
pub fn build_observer_odes(model: &PlantModel, c: &CouplingFunctions) -> (Matrix, Matrix) {
    let (p, q, n) = (model.p, model.q, model.n);
    let mut a = Matrix::zeros(p + q, p + q);
    a.view_mut((0, 0), (p, p)).copy_from(&model.a0);
    a.view_mut((0, p), (p, q)).copy_from(&c.g4);
    a.view_mut((p, p), (q, q)).copy_from(&model.a1);
    let mut g = Matrix::zeros(p + q, n);
    g.view_mut((0, 0), (p, n)).copy_from(&c.g3);
    g.view_mut((p, 0), (q, n)).copy_from(&model.e1);
    (a, g)
}

/// Design parameters of [`synthesize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    pub n_grid: usize,
    /// Decay margin demanded of `A_o + L_oC_eff`.
    pub observer_margin: f64,
    /// Decay margin demanded of `A_c + B̄K_c`.
    pub control_margin: f64,
}

impl SynthesisOptions {
    pub fn new(n_grid: usize) -> Self {
        Self {
            n_grid,
            observer_margin: DEFAULT_MARGIN,
            control_margin: DEFAULT_MARGIN,
        }
    }
}

/// Everything the closed loop needs, from kernels to gains.
#[derive(Debug, Clone)]
pub struct FullSynthesis {
    pub model: PlantModel,
    pub options: SynthesisOptions,
    pub kernels: KernelSetObserver,
    pub coupling: CouplingFunctions,
    pub control_kernels: KernelSetControl,
    pub observer_form: ObserverDelayForm,
    pub control_form: ControlDelayForm,
    pub observer: ObserverSynthesis,
    pub controller: ControllerSynthesis,
}

pub fn synthesize(model: &PlantModel, options: SynthesisOptions) -> Result<FullSynthesis> {
    let errors = model.validate();
    if !errors.is_empty() {
        return Err(Error::InvalidModel(errors));
    }
    let bundle = KernelBundle::solve(model, TriGrid::new(options.n_grid)?)?;
    synthesize_from(model, options, bundle)
}

/// Delay forms plus the two gain designs, each of which may fail on its own assumption.
#[derive(Debug)]
pub struct Staged {
    pub bundle: KernelBundle,
    pub observer_form: ObserverDelayForm,
    pub control_form: ControlDelayForm,
    /// Fails when `(C_eff, A_o)` is not detectable.
    pub observer: Result<ObserverSynthesis>,
    /// Fails when `(A_c, B̄)` is not stabilizable.
    pub controller: Result<ControllerSynthesis>,
}

pub fn stage(model: &PlantModel, options: SynthesisOptions, bundle: KernelBundle) -> Result<Staged> {
    let observer_form = derive_observer_delay_form(model, &bundle.coupling)?;
    let control_form = derive_control_delay_form(model, &bundle.coupling, &bundle.control)?;
    let observer = design_observer(model, &bundle.coupling, &observer_form, options.observer_margin);
    let controller = design_controller(model, &bundle.coupling, &control_form, options.control_margin);
    Ok(Staged {
        bundle,
        observer_form,
        control_form,
        observer,
        controller,
    })
}

impl Staged {
    pub fn finish(self, model: &PlantModel, options: SynthesisOptions) -> Result<FullSynthesis> {
        Ok(FullSynthesis {
            model: model.clone(),
            options,
            kernels: self.bundle.observer,
            coupling: self.bundle.coupling,
            control_kernels: self.bundle.control,
            observer_form: self.observer_form,
            control_form: self.control_form,
            observer: self.observer?,
            controller: self.controller?,
        })
    }
}

/// [`synthesize`] from already solved kernels (e.g. loaded from the cache).
pub fn synthesize_from(model: &PlantModel, options: SynthesisOptions, bundle: KernelBundle) -> Result<FullSynthesis> {
    stage(model, options, bundle)?.finish(model, options)
}
