// Function to initialize and return the parameters used by the dynamic script
function initializeParams() {
    return {
        speed: 2, // Speed of the movement, defined as 2 units. Adjust this value to increase or decrease the speed. Note that the animation parameter should NOT repeat the parameter in primitive scripts, but rather control parameters for the animation
    };
}

// Define a function that encapsulates its own state using a closure
const dynamicScript = (function() {
    let direction = 1; // Initialize direction: 1 signifies moving right, -1 signifies moving left

    // Return a function that updates the position based on parameters
    return function(deltaTime, params, parentparams) {
        const { speed } = params; // Destructure speed from params for easy access

        // Conditional check to reverse direction when hitting boundaries
        if (
            parentparams.squarePosX >= ShapeDisplay.grid_x || // Right boundary check
            parentparams.squarePosX <= 0 // Left boundary check
        ) {
            direction *= -1; // Reverse direction upon hitting a boundary
        }

        // Update the square's position on the X axis based on direction, speed, and elapsed time
        parentparams.squarePosX += direction * speed * deltaTime;
    };
})();
