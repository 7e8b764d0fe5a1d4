//! Layer tables and parameter counts of the four stock models.

use mbrsep::model::{build, describe, ModelKind};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> mbrsep::Result<()> {
    for kind in ModelKind::ALL {
        println!("{}", describe(&build(kind))?);
    }
    Ok(())
}
