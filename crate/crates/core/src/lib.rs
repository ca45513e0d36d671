pub mod mesh;
pub mod material;
pub mod linalg;
pub mod fem;
pub mod tensor;
pub mod scaling;
pub mod nn;
pub mod ifenn;
pub mod bench;
