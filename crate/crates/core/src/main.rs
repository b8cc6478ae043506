fn main() {
    std::process::exit(drm_core::cli::run(std::env::args_os()));
}
