//! Cell id arithmetic: paths, levels, ranges and point lookup.

use geoblocks::cellgrid::{CellId, Domain};

fn main() -> geoblocks::Result<()> {
    let id = CellId::from_path(&[1, 2])?;
    println!("path [1, 2] -> {id} (level {})", id.level());
    println!("range [{:#018x}, {:#018x}]", id.range_min(), id.range_max());
    for (d, child) in id.children()?.iter().enumerate() {
        println!("  child {d}: {child} contained={}", id.contains(*child));
    }
    println!("parent at level 1: {}", id.parent(1)?);

    let nyc = Domain::NYC;
    let (lon, lat) = (-73.9855, 40.7580);
    for level in [4u8, 8, 12, 16] {
        let cell = nyc.cell_of_point(lon, lat, level)?;
        println!(
            "level {level:2}: {cell} diagonal {:8.1} m, ancestor of level-31 leaf: {}",
            nyc.cell_max_diagonal_m(cell),
            cell.contains(nyc.cell_of_point(lon, lat, 31)?)
        );
    }
    println!("level for 50 m error: {}", nyc.level_for_error(50.0)?);
    Ok(())
}
