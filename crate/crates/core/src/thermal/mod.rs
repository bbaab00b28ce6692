//! Synthetic pulsed-thermography films.
//!
//! Surface temperature follows the image-source solution for an
//! instantaneous planar heat pulse on a plate of thickness `L` whose back
//! face reflects a fraction `R` of the thermal wave. A finite laser pulse is
//! the superposition of one sub-impulse per frame interval. Pixels over the
//! weld nugget see the full stack thickness, everywhere else sees one sheet,
//! which produces the cold spot / hot rim contrast of a sound joint.

mod dataset;
mod diffusion;
mod params;
mod render;

pub use dataset::{
    generate_dataset, plan_dataset, ClassMix, EmissivityModel, FilmPlan, OffsetModel, ParamRanges,
    SimulationConfig,
};
pub use diffusion::{
    impulse_temperature, lateral_factor, pulse_temperature, reflection_series, STEFAN_BOLTZMANN,
};
pub use params::{LaserPulse, MaterialParams, PixelRect, RenderParams, SpecimenSpec};
pub use render::{render_film, temperature_field, ThermalFilm};
