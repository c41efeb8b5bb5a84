#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reallm {

//
// All library failures derive from reallm::error; the subclass names the
// category so callers (and the CLI) can report module provenance.
//
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class dimension_error : public error {
public:
    using error::error;
};

class parameter_error : public error {
public:
    using error::error;
};

class convergence_error : public error {
public:
    convergence_error(const std::string& what, double residual)
        : error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class tiling_error : public error {
public:
    using error::error;
};

class structure_error : public error {
public:
    using error::error;
};

class corruption_error : public error {
public:
    corruption_error(const std::string& section, const std::string& what)
        : error("section '" + section + "': " + what), section_(section) {}

    const std::string& section() const noexcept { return section_; }

private:
    std::string section_;
};

class format_error : public error {
public:
    using error::error;
};

class version_error : public error {
public:
    version_error(unsigned found, unsigned supported)
        : error("unsupported container version " + std::to_string(found) + " (supported: " +
                std::to_string(supported) + ")"),
          found_(found) {}

    unsigned found() const noexcept { return found_; }

private:
    unsigned found_;
};

class training_error : public error {
public:
    training_error(const std::string& what, std::size_t epoch)
        : error(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

class gradient_error : public error {
public:
    using error::error;
};

class configuration_error : public error {
public:
    using error::error;
};

}  // namespace reallm
