#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <set>
#include <stdexcept>
#include <string>

namespace trajopt {

// Schema error tied to a location in the input document.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& pointer, const std::string& message)
        : std::runtime_error(pointer + ": " + message), pointer_(pointer) {}
    const std::string& pointer() const { return pointer_; }

private:
    std::string pointer_;
};

// Reads keys from a JSON object and remembers which ones were used so that
// finish() can reject the rest.
class ObjectReader {
public:
    ObjectReader(const nlohmann::json& j, std::string pointer);

    bool has(const std::string& key) const;
    std::string path(const std::string& key) const;
    const nlohmann::json& at(const std::string& key);

    double number(const std::string& key, double fallback);
    int integer(const std::string& key, int fallback);
    bool boolean(const std::string& key, bool fallback);
    std::string string(const std::string& key, const std::string& fallback);
    Eigen::Vector3d vec3(const std::string& key, const Eigen::Vector3d& fallback);
    Eigen::VectorXd vector(const std::string& key, const Eigen::VectorXd& fallback);
    Eigen::Matrix3d mat3(const std::string& key, const Eigen::Matrix3d& fallback);

    // throws ConfigError naming the first unused key
    void finish() const;

private:
    const nlohmann::json& j_;
    std::string pointer_;
    std::set<std::string> used_;
};

Eigen::VectorXd json_vector(const nlohmann::json& j, const std::string& pointer);
nlohmann::json to_json(const Eigen::VectorXd& v);
nlohmann::json to_json(const Eigen::Matrix3d& m);

} // namespace trajopt
