use pyo3::prelude::*;

#[pymodule]
fn homog(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
