use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR not set");

    let include_dir = PathBuf::from(&crate_dir).join("include");
    std::fs::create_dir_all(&include_dir).expect("creating include directory");

    let config = cbindgen::Config::from_file("cbindgen.toml")
        .expect("reading cbindgen.toml");

    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(include_dir.join("cocot.h"));
        }
        // keep `cargo check` and rust-analyzer usable while the crate
        // itself fails to parse
        Err(cbindgen::Error::ParseSyntaxError { .. }) => {}
        Err(e) => panic!("generating C header: {e}"),
    }

    println!("cargo:rerun-if-changed=src/");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
