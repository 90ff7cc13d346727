//! Cover a polygon with cells and inspect the error bound.

use geoblocks::cellgrid::{cover_polygon, Domain, Polygon};

fn main() -> geoblocks::Result<()> {
    let d = Domain::NYC;
    let poly = Polygon::from_geojson_str(
        r#"{"type":"Polygon","coordinates":[[[-74.02,40.70],[-73.97,40.71],[-73.93,40.80],[-73.96,40.82],[-74.01,40.75],[-74.02,40.70]]]}"#,
    )?;
    for (level, max_cells) in [(10u8, 64usize), (12, 256), (14, 256), (14, 2048)] {
        let cov = cover_polygon(&poly, level, max_cells, &d)?;
        let finest = cov.cells.iter().map(|c| c.level()).max().unwrap_or(0);
        println!(
            "max level {level:2}, max cells {max_cells:4}: {:4} cells, finest level {finest:2}, epsilon {:7.1} m",
            cov.len(),
            cov.epsilon_m
        );
    }
    Ok(())
}
