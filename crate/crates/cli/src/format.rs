//! Number formatting for reports.

/// Three significant digits, positional notation.
pub fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return sci(x);
    }
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Scientific notation with three significant digits, e.g. `1.23e-9`.
pub fn sci(x: f64) -> String {
    if x == 0.0 {
        return "0.00e0".into();
    }
    format!("{x:.2e}")
}

/// `|i><j|` with binary labels for qubit registers.
pub fn ket_bra_label(i: usize, j: usize, dim: usize) -> String {
    if dim.is_power_of_two() && dim > 1 {
        let width = dim.trailing_zeros() as usize;
        format!("|{i:0width$b}><{j:0width$b}|")
    } else {
        format!("|{i}><{j}|")
    }
}
