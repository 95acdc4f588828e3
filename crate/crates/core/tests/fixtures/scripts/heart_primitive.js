// Heart from the implicit curve (x^2 + y^2 - 1)^3 - x^2 y^3 <= 0
function initializeParams() {
    return {
        heartPositionX: 12, // Column of the heart centre
        heartPositionY: 12, // Row of the heart centre
        heartScale: 8, // Pins per unit of the heart curve
        heartHeight: 40, // Pin height inside the heart
    };
}

function dynamicScript(deltaTime, params) {
    const { heartPositionX, heartPositionY, heartScale, heartHeight } = params;
    if (heartScale <= 0) {
        return;
    }
    ShapeDisplay.Pins.forEach((pin, index) => {
        const x = ((index % ShapeDisplay.grid_x) - heartPositionX) / heartScale;
        const y = (heartPositionY - Math.floor(index / ShapeDisplay.grid_x)) / heartScale;
        const a = x * x + y * y - 1;
        if (a * a * a - x * x * y * y * y <= 0) {
            pin.setPos(heartHeight);
        }
    });
}
