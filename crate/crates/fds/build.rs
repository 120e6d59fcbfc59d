fn main() {
    // eigensolver bindings in src/linalg.rs resolve against the system BLAS/LAPACK
    println!("cargo:rustc-link-lib=openblas");
}
