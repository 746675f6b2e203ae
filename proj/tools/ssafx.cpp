#include <ssafx/cli.hpp>

int main(int argc, char** argv)
{
    return ssafx::cli::run(argc, argv);
}
