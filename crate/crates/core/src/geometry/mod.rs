//! Lattice primitives, attachments and figure rasterization.

pub mod attach;
pub mod bank;
pub mod cellset;
pub mod lattice;
pub mod primitive;
pub mod render;

pub use attach::{enumerate_attachments, pair_cells, AttachmentTable, Configuration};
pub use bank::{default_bank, PrimId, PrimitiveBank, Rgb};
pub use cellset::{canonicalize, rotate_cells, CellSet, Piece};
pub use lattice::{Half, Point, Pose, Quarter, Side, SideLength, Triangle, Wedge};
pub use primitive::{build_primitive, Primitive};
pub use render::{render, render_canvas, Raster};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("a primitive needs exactly 4 triangles, got {0}")]
    WrongTriangleCount(usize),
    #[error("triangles overlap")]
    Overlap,
    #[error("triangles are not connected through shared edges")]
    Disconnected,
    #[error("boundary is not a single simple polygon")]
    NotSimple,
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("unknown primitive {0}")]
    UnknownPrimitive(String),
    #[error("figure needs {width}x{height} px, canvas allows {max}")]
    CanvasOverflow { width: usize, height: usize, max: usize },
}
