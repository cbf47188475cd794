fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(lidar_derain::cli::run(&args[1..]));
}
