fn main() {
    std::process::exit(lexalign::cli::main_entry());
}
