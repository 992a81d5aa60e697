fn main() {
    let result = kappagate_cli::run(std::env::args_os());
    if result.exit_code == 0 {
        print!("{}", result.text);
    } else {
        eprint!("{}", result.text);
    }
    std::process::exit(result.exit_code);
}
