//! Grids, quadrature and the discrete fixed-point maps.

mod field;
mod grid;
mod maps;
mod quadrature;

pub use field::Field;
pub use grid::{Grid, Stencil};
pub use maps::{
    apply_c_map, apply_n_map, apply_n_map_frozen, apply_p_map, assemble_n_operator, FcSign,
    MapContext, Stage, StageMap, Switches,
};
pub use quadrature::{cumulative_trapezoid, total_population, trapezoid};
