//! Unit conversions applied once, at configuration ingestion.

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn kj_to_j(kj: f64) -> f64 {
    kj * 1e3
}

pub fn per_km2_to_per_m2(density: f64) -> f64 {
    density * 1e-6
}

pub fn km2_to_m2(area: f64) -> f64 {
    area * 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_round_trip() {
        for db in [-115.0, -3.0, 0.0, 5.0, 15.0] {
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-12);
        }
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((db_to_linear(-115.0) - 3.1622776601683794e-12).abs() < 1e-24);
    }
}
