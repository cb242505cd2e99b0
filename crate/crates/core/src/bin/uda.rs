fn main() {
    std::process::exit(uda_i2i::cli::run(std::env::args_os()));
}
