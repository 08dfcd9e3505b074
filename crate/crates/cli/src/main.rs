fn main() {
    std::process::exit(geoforensics::run(std::env::args_os()));
}
