mod common;

use common::naive_dbscan;
use vapc::cluster::{dbscan, DbscanParams};
use vapc::metric::{DistanceMatrix, MetricTag};

#[test]
fn matches_naive_reference_on_random_instances() {
    let secs = common::check_dbscan(200, 99).unwrap();
    assert!(secs < 10.0, "{secs}s");
}

#[test]
fn border_point_goes_to_first_discovered_cluster() {
    // Two dense runs on a line; point 4 is a border point of both.
    let x: [f64; 9] = [0.0, 0.2, 0.4, 0.6, 1.5, 2.4, 2.6, 2.8, 3.0];
    let dist = DistanceMatrix::from_fn(9, MetricTag::SqEuclidean, |i, j| (x[i] - x[j]).abs());
    let labels = dbscan(&dist, DbscanParams::new(1.0, 4).unwrap());
    assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);
    assert_eq!(labels, naive_dbscan(&dist, 1.0, 4));
}
