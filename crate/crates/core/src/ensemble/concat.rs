use crate::linalg::Matrix;
use crate::store::{AlignedViews, VectorTable};

/// Row-wise concatenation of all views, in view order. Width is the sum of view dims.
pub fn concat_rows(views: &AlignedViews) -> Matrix {
    let k: usize = views.dims().iter().sum();
    let mut out = Matrix::zeros(views.len(), k);
    for r in 0..views.len() {
        let row = out.row_mut(r);
        let mut offset = 0;
        for m in views.matrices() {
            row[offset..offset + m.cols()].copy_from_slice(m.row(r));
            offset += m.cols();
        }
    }
    out
}

pub fn concat_combine(views: &AlignedViews) -> VectorTable {
    VectorTable::new("con", views.ids.clone(), concat_rows(views)).expect("aligned IDs are unique")
}
