use crate::error::{Error, Result};
use crate::numkit::Tensor2D;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

pub fn validate_coordinate(lat: f64, lon: f64) -> Result<()> {
    if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err(Error::validation(format!("latitude {lat} outside [-90, 90]")));
    }
    if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::validation(format!("longitude {lon} outside [-180, 180]")));
    }
    Ok(())
}

fn unit_vector(lat_deg: f64, lon_deg: f64) -> [f64; 3] {
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

/// Great-circle distance in km: the angle between the two position vectors
/// times the Earth radius.
pub fn geodesic_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> Result<f64> {
    validate_coordinate(lat1, lon1)?;
    validate_coordinate(lat2, lon2)?;
    Ok(arc_km(lat1, lon1, lat2, lon2))
}

fn arc_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    if lat1 == lat2 && lon1 == lon2 {
        return 0.0;
    }
    let a = unit_vector(lat1, lon1);
    let b = unit_vector(lat2, lon2);
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
    dot.acos() * EARTH_RADIUS_KM
}

/// Strictly upper-triangular matrix of pairwise distances; the diagonal and
/// lower triangle are zero.
pub fn distance_matrix(lat: &[f64], lon: &[f64]) -> Result<Tensor2D> {
    if lat.len() != lon.len() {
        return Err(Error::validation(format!(
            "distance_matrix: {} latitudes but {} longitudes",
            lat.len(),
            lon.len()
        )));
    }
    if lat.is_empty() {
        return Err(Error::validation("distance_matrix: no cells"));
    }
    for (&la, &lo) in lat.iter().zip(lon) {
        validate_coordinate(la, lo)?;
    }
    let n = lat.len();
    let mut d = Tensor2D::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            d.set(i, j, arc_km(lat[i], lon[i], lat[j], lon[j]));
        }
    }
    Ok(d)
}
