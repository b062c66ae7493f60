#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace attrirec {

enum class Task : std::size_t { pred = 0, exp = 1, rate = 2, cross = 3 };

inline constexpr std::size_t kTaskCount = 4;
inline constexpr std::array<Task, kTaskCount> kAllTasks = {Task::pred, Task::exp, Task::rate, Task::cross};

constexpr std::size_t index_of(Task task) { return static_cast<std::size_t>(task); }

constexpr std::string_view task_name(Task task) {
    switch (task) {
    case Task::pred: return "pred";
    case Task::exp: return "exp";
    case Task::rate: return "rate";
    case Task::cross: return "cross";
    }
    return "?";
}

// Multi-task coefficients lambda_t plus the adaptation rule parameters.
struct TaskWeights {
    std::array<double, kTaskCount> lambdas = {1.0, 1.0, 1.0, 1.0};
    double eta = 0.1;
    double floor = 0.05;
    // Sum of the active lambdas after renormalization; defaults to the
    // number of active tasks.
    std::optional<double> renorm_target;

    double& operator[](Task task) { return lambdas[index_of(task)]; }
    double operator[](Task task) const { return lambdas[index_of(task)]; }

    static TaskWeights only(Task task) {
        TaskWeights tw;
        tw.lambdas = {0.0, 0.0, 0.0, 0.0};
        tw[task] = 1.0;
        return tw;
    }
};

// Per-task mean losses for one batch. A task is active when it has data in
// the batch and a positive lambda.
struct TaskLosses {
    std::array<double, kTaskCount> loss = {0.0, 0.0, 0.0, 0.0};
    std::array<bool, kTaskCount> active = {false, false, false, false};
    double total = 0.0; // sum over active tasks of lambda_t * loss_t

    double operator[](Task task) const { return loss[index_of(task)]; }
    bool is_active(Task task) const { return active[index_of(task)]; }
};

} // namespace attrirec
