fn main() {
    for (key, var) in [
        ("AGBO_BUILD_PROFILE", "PROFILE"),
        ("AGBO_BUILD_TARGET", "TARGET"),
    ] {
        let v = std::env::var(var).unwrap_or_else(|_| "unknown".into());
        println!("cargo:rustc-env={key}={v}");
    }
    println!("cargo:rerun-if-changed=build.rs");
}
