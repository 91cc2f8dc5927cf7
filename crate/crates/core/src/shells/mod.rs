//! Triangle-mesh shape space with the discrete shells energy.

mod dual;
mod energy;
pub mod generate;
mod mesh;
mod model;
mod modes;

pub use dual::{Dual1, Dual2, Real};
pub use energy::{shell_energy, ShellParams};
pub use generate::{make_bump_plate, make_flat_sheet, make_sphere_shell, make_three_branch};
pub use mesh::{dihedral_angle, obj_string, write_obj, write_obj_sequence, Flap, MeshTopology, ShellMesh};
pub use model::{rigid_modes, shell_energy_model, GaugeSpec, ShellModel};
pub use modes::{hessian_eigenmodes, Mode};
